use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use isoscope_core::clock::LogicalClock;
use isoscope_core::metrics::{mean_pairwise_similarity, vocabulary_size, CaptionCorpus, TermFrequencyEmbedder};
use isoscope_core::render::CameraAngle;
use isoscope_core::text::token_set;
use isoscope_core::VolumeDataset;
use isoscope_knowledge::{
    FeatureIndex, FeatureIndexConfig, KnowledgeBase, KnowledgeError, ScreenshotRecord, Selector, SelectorMode,
    Synonyms,
};
use isoscope_llm::{
    FeatureBand, Gateway, GatewayConfig, Role, ScriptedBackend, SyntheticCaptioner, UnavailableBackend,
    EMPTY_SURFACE_CAPTION,
};

/// Radial field, 1 at the center falling to 0 at the corners.
fn sphere(n: usize) -> Arc<VolumeDataset> {
    let c = (n as f64 - 1.0) / 2.0;
    let rmax = (3.0 * c * c).sqrt();
    Arc::new(
        VolumeDataset::from_fn("sphere", [n; 3], |x, y, z| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
            1.0 - d / rmax
        })
        .unwrap(),
    )
}

fn index(dir: &std::path::Path, captioner: SyntheticCaptioner, selector: SelectorMode) -> FeatureIndex {
    let gateway =
        Gateway::new(GatewayConfig::default(), Arc::new(UnavailableBackend)).with_captioner(Arc::new(captioner));
    let mut cfg = FeatureIndexConfig::new(dir.join("images"));
    cfg.render_size = (32, 32);
    cfg.selector = selector;
    cfg.tracked_features = vec!["skull".into()];
    FeatureIndex::new(
        Arc::new(KnowledgeBase::open(dir.join("feature_index.db")).unwrap()),
        gateway,
        Arc::new(LogicalClock::default()),
        cfg,
    )
    .unwrap()
}

fn record(iso: f64, angle: &str, caption: &str) -> ScreenshotRecord {
    ScreenshotRecord {
        dataset: "d".into(),
        isovalue: iso,
        angle: angle.into(),
        image_path: format!("img_{iso}_{angle}.png").into(),
        caption: caption.into(),
        keywords: isoscope_core::text::keywords(caption),
        created_at: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
    }
}

#[test]
fn sweep_is_complete_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let fi = index(dir.path(), SyntheticCaptioner::new(vec![]), SelectorMode::FallbackOnly);
    let angles = &CameraAngle::canonical()[..3];
    let recs = fi.run_sweep(sphere(12), 4, angles).unwrap();
    assert_eq!(recs.len(), 12);
    assert_eq!(fi.kb().count("sphere").unwrap(), 12);
    for r in &recs {
        assert!(r.image_path.exists());
        assert!(r.keywords.is_subset(&token_set(&r.caption)));
        assert!(r.isovalue > 0.0 && r.isovalue < 1.0);
    }
    assert!(fi.run_sweep(sphere(12), 4, angles).unwrap().is_empty());
    assert_eq!(fi.kb().count("sphere").unwrap(), 12);
}

#[test]
fn constant_volume_gives_empty_surface_caption() {
    let dir = tempfile::tempdir().unwrap();
    let fi = index(dir.path(), SyntheticCaptioner::new(vec![]), SelectorMode::FallbackOnly);
    let vol = Arc::new(VolumeDataset::from_fn("flat", [4; 3], |_, _, _| 7.0).unwrap());
    let recs = fi.run_sweep(vol, 1, &CameraAngle::canonical()[..1]).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].caption, EMPTY_SURFACE_CAPTION);
}

#[test]
fn captioner_outage_aborts_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(GatewayConfig::default(), Arc::new(UnavailableBackend));
    let fi = FeatureIndex::new(
        Arc::new(KnowledgeBase::open_in_memory().unwrap()),
        gateway,
        Arc::new(LogicalClock::default()),
        FeatureIndexConfig { render_size: (16, 16), ..FeatureIndexConfig::new(dir.path()) },
    )
    .unwrap();
    let err = fi.run_sweep(sphere(8), 2, &CameraAngle::canonical()[..1]).unwrap_err();
    assert!(matches!(err, KnowledgeError::CaptionerUnavailable(_)), "{err}");
    assert_eq!(fi.kb().count("sphere").unwrap(), 0);
}

#[test]
fn fallback_examples() {
    let dir = tempfile::tempdir().unwrap();
    let fi = index(dir.path(), SyntheticCaptioner::new(vec![]), SelectorMode::LlmWithFallback);
    fi.kb()
        .insert_batch(&[
            record(1.0, "a0", "A skull."),
            record(1.0, "a1", "The skull and the skull again."),
            record(2.0, "a0", "A skull next to a blob."),
            record(3.0, "a0", "Nothing here."),
        ])
        .unwrap();
    let r = fi.query_feature("d", "skull").unwrap();
    assert_eq!(r.chosen_isovalue, 1.0);
    assert_eq!(r.selector, Selector::Fallback);
    let counts: Vec<(f64, usize)> = r.candidates.iter().map(|c| (c.isovalue, c.match_count)).collect();
    assert_eq!(counts, vec![(1.0, 3), (2.0, 1)]);

    let r = fi.query_feature("d", "blob").unwrap();
    assert_eq!((r.chosen_isovalue, r.selector), (2.0, Selector::Fallback));

    assert!(matches!(fi.query_feature("d", "teeth"), Err(KnowledgeError::FeatureNotFound { .. })));
    assert!(matches!(fi.query_feature("empty", "skull"), Err(KnowledgeError::EmptyKnowledgeBase(_))));

    // identical inputs, identical answer
    let again = fi.query_feature("d", "skull").unwrap();
    assert_eq!(again, fi.query_feature("d", "skull").unwrap());
}

#[test]
fn synonyms_widen_matching() {
    let dir = tempfile::tempdir().unwrap();
    let fi = index(dir.path(), SyntheticCaptioner::new(vec![]), SelectorMode::FallbackOnly)
        .with_synonyms(Synonyms::parse("skull = [\"cranium\"]").unwrap());
    fi.kb()
        .insert_batch(&[record(1.0, "a0", "A cranium."), record(2.0, "a0", "A skull."), record(2.0, "a1", "skull")])
        .unwrap();
    let r = fi.query_feature("d", "skull").unwrap();
    assert_eq!(r.candidates.len(), 2);
    assert_eq!(r.chosen_isovalue, 2.0);
}

#[test]
fn llm_selector_is_used_when_available() {
    let dir = tempfile::tempdir().unwrap();
    let backend = Arc::new(ScriptedBackend::new());
    backend.push(Role::Qa, "The best isovalue is 2.0 because the skull is sharper there.");
    backend.push(Role::Qa, "I cannot tell.");
    let gateway = Gateway::new(GatewayConfig::default(), backend.clone());
    let fi = FeatureIndex::new(
        Arc::new(KnowledgeBase::open_in_memory().unwrap()),
        gateway,
        Arc::new(LogicalClock::default()),
        FeatureIndexConfig::new(dir.path()),
    )
    .unwrap();
    fi.kb()
        .insert_batch(&[record(1.0, "a0", "skull skull"), record(2.0, "a0", "skull")])
        .unwrap();
    let r = fi.query_feature("d", "skull").unwrap();
    assert_eq!((r.chosen_isovalue, r.selector), (2.0, Selector::Llm));
    let prompt = &backend.calls()[0].1;
    assert!(prompt.contains("isovalue 1: 2 mentions"));
    let r = fi.query_feature("d", "skull").unwrap();
    assert_eq!((r.chosen_isovalue, r.selector), (1.0, Selector::Fallback));
}

#[test]
fn fixed_vocabulary_converges_in_one_round() {
    let dir = tempfile::tempdir().unwrap();
    let fi = index(dir.path(), SyntheticCaptioner::fixed_vocabulary(), SelectorMode::FallbackOnly);
    fi.run_sweep(sphere(12), 5, &CameraAngle::canonical()[..2]).unwrap();
    let reports = fi.self_improve("sphere", 2.0, 4).unwrap();
    assert_eq!(reports.len(), 1);
    assert!(reports[0].converged);
    assert!(reports[0].new_keywords.is_empty());
    assert_eq!(reports[0].before.image_count, 10);
    assert_eq!(reports[0].after.image_count, 20);
}

#[test]
fn banded_vocabulary_grows_until_bands_exhausted() {
    // four narrow bands; each only catches grid points once the grid is dense enough
    let bands = vec![
        FeatureBand::new("alpha", 0.30, 0.36),
        FeatureBand::new("beta", 0.52, 0.55),
        FeatureBand::new("gamma", 0.611, 0.625),
        FeatureBand::new("delta", 0.441, 0.446),
    ];
    let dir = tempfile::tempdir().unwrap();
    let fi = index(dir.path(), SyntheticCaptioner::new(bands.clone()), SelectorMode::FallbackOnly);
    fi.run_sweep(sphere(12), 3, &CameraAngle::canonical()[..1]).unwrap();
    let reports = fi.self_improve("sphere", 2.0, 6).unwrap();
    let mut prev_vocab = 0;
    let mut prev_images = 0;
    for r in &reports {
        assert!(r.after.image_count >= r.before.image_count);
        assert!(r.after.vocabulary_size >= r.before.vocabulary_size);
        assert!(r.before.image_count >= prev_images && r.before.vocabulary_size >= prev_vocab);
        prev_images = r.after.image_count;
        prev_vocab = r.after.vocabulary_size;
        assert_eq!(r.converged, r.new_keywords.is_empty());
        // independent count: band terms hit by the grid so far
        let isos = fi.kb().isovalues("sphere").unwrap();
        let hit: BTreeSet<&str> = bands
            .iter()
            .filter(|b| isos.iter().any(|v| b.contains(*v)))
            .map(|b| b.term.as_str())
            .collect();
        let seen: BTreeSet<String> = fi
            .kb()
            .records("sphere")
            .unwrap()
            .iter()
            .flat_map(|x| x.keywords.clone())
            .collect();
        for t in &hit {
            assert!(seen.contains(*t), "{t}");
        }
        if !r.converged {
            assert!(r.after.vocabulary_size > r.before.vocabulary_size);
        }
    }
    assert!(reports.last().unwrap().converged || reports.len() == 6);
}

#[test]
fn report_matches_direct_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let fi = index(dir.path(), SyntheticCaptioner::new(vec![]), SelectorMode::FallbackOnly);
    let caps = ["A large skull near the center.", "A skull toward the left.", "Small bright shell."];
    fi.kb()
        .insert_batch(&[record(1.0, "a0", caps[0]), record(1.0, "a1", caps[1]), record(2.0, "a0", caps[2])])
        .unwrap();
    let rep = fi.knowledge_report("d").unwrap();
    let corpus = CaptionCorpus::from_captions(&caps);
    assert_eq!(rep.image_count, 3);
    assert_eq!(rep.vocabulary_size, vocabulary_size(&corpus));
    let want = mean_pairwise_similarity(&corpus, &TermFrequencyEmbedder).unwrap();
    assert!((rep.mean_pairwise_similarity.unwrap() - want).abs() < 1e-12);
    assert_eq!(rep.per_feature_best["skull"], Some(1.0));

    let dir2 = tempfile::tempdir().unwrap();
    let fi2 = index(dir2.path(), SyntheticCaptioner::new(vec![]), SelectorMode::FallbackOnly);
    fi2.kb().insert_batch(&[record(1.0, "a0", caps[0])]).unwrap();
    assert_eq!(fi2.knowledge_report("d").unwrap().mean_pairwise_similarity, None);
}

#[test]
fn denser_sweep_moves_choice_toward_band_center() {
    let vol = sphere(32);
    let (lo, hi) = vol.scalar_range();
    let at = |f: f64| lo + f * (hi - lo);
    let skull = FeatureBand::new("skull", at(0.30), at(0.45));
    let brain = FeatureBand::new("brain", at(0.60), at(0.75));
    let mid = 0.5 * (skull.lo + skull.hi);
    let dir = tempfile::tempdir().unwrap();
    let fi = index(dir.path(), SyntheticCaptioner::new(vec![skull, brain]), SelectorMode::FallbackOnly);
    let start = std::time::Instant::now();
    assert_eq!(fi.run_sweep(vol.clone(), 25, &CameraAngle::canonical()).unwrap().len(), 150);
    let before = fi.query_feature("sphere", "skull").unwrap();
    let reports = fi.self_improve("sphere", 2.0, 1).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(fi.kb().count("sphere").unwrap(), 300);
    let after = fi.query_feature("sphere", "skull").unwrap();
    let (d0, d1) = ((before.chosen_isovalue - mid).abs(), (after.chosen_isovalue - mid).abs());
    assert!(d1 < d0, "before {} after {} mid {mid}", before.chosen_isovalue, after.chosen_isovalue);
    assert!(start.elapsed().as_secs() < 120);
}
