use serde::{Deserialize, Serialize};

use crate::analysis::Histogram;

pub const DEFAULT_PROMINENCE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMode {
    pub bin_index: usize,
    pub bin_center: f64,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
}

impl HistogramMode {
    /// True when `value` falls in this mode's bin (last bin right-closed is
    /// not distinguished here; callers probe interior values).
    pub fn contains(&self, value: f64) -> bool {
        self.bin_lo <= value && value < self.bin_hi
    }
}

/// Local maxima whose count is at least `prominence_fraction * max(counts)`.
/// A plateau of equal counts counts once, reported at its leftmost bin, and
/// is a maximum only when both neighbours (where present) are lower.
pub fn histogram_modes(hist: &Histogram, prominence_fraction: f64) -> Vec<HistogramMode> {
    let c = &hist.counts;
    let Some(&max) = c.iter().max() else {
        return Vec::new();
    };
    if max == 0 {
        return Vec::new();
    }
    let floor = prominence_fraction * max as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < c.len() {
        let mut j = i;
        while j + 1 < c.len() && c[j + 1] == c[i] {
            j += 1;
        }
        let left_lower = i == 0 || c[i - 1] < c[i];
        let right_lower = j + 1 == c.len() || c[j + 1] < c[i];
        if left_lower && right_lower && c[i] > 0 && c[i] as f64 >= floor {
            out.push(HistogramMode {
                bin_index: i,
                bin_center: hist.bin_center(i),
                bin_lo: hist.bin_edges[i],
                bin_hi: hist.bin_edges[i + 1],
                count: c[i],
            });
        }
        i = j + 1;
    }
    out
}
