use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::MetricsError;

/// Largest n1*n2 for which the exact null distribution is enumerated.
pub const EXACT_MAX_PRODUCT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UTestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    pub u_statistic: f64,
    pub p_value_two_sided: f64,
    pub method: UTestMethod,
}

/// Midranks (1-based) of the pooled sample plus the tie group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// counts[u] = number of label arrangements of m + n distinct values whose
/// first-sample U statistic equals u.
fn u_distribution(m: usize, n: usize) -> Vec<u128> {
    // table[a][b] holds the distribution for sample sizes (a, b)
    let mut table: Vec<Vec<Vec<u128>>> = vec![vec![Vec::new(); n + 1]; m + 1];
    for a in 0..=m {
        for b in 0..=n {
            table[a][b] = if a == 0 || b == 0 {
                vec![1]
            } else {
                let mut d = vec![0u128; a * b + 1];
                // largest value belongs to sample 1: it beats all b of sample 2
                for (u, &c) in table[a - 1][b].iter().enumerate() {
                    d[u + b] += c;
                }
                for (u, &c) in table[a][b - 1].iter().enumerate() {
                    d[u] += c;
                }
                d
            };
        }
    }
    std::mem::take(&mut table[m][n])
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricsError::InvalidParameter("non-finite sample value".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let prod = (n1 * n2) as f64;
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u = u1.min(prod - u1);

    if n1 * n2 <= EXACT_MAX_PRODUCT && ties.is_empty() {
        let dist = u_distribution(n1, n2);
        let total: u128 = dist.iter().sum();
        // u is an integer here since there are no ties
        let k = u.round() as usize;
        let tail: u128 = dist[..=k].iter().sum();
        let p = (2.0 * tail as f64 / total as f64).min(1.0);
        return Ok(UTestResult {
            u_statistic: u,
            p_value_two_sided: p,
            method: UTestMethod::Exact,
        });
    }

    let n = (n1 + n2) as f64;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = prod / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let mu = prod / 2.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2)
    };
    Ok(UTestResult {
        u_statistic: u,
        p_value_two_sided: p.clamp(f64::MIN_POSITIVE, 1.0),
        method: UTestMethod::NormalApprox,
    })
}
