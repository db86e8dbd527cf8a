use depscreen::config::PipelineConfig;
use depscreen::corpus::{synth_corpus, SynthOptions};
use depscreen::pipeline::{pipeline_all, PipelineError};

#[test]
fn external_manifest_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(&SynthOptions { participants: 4, seed: 9, ..SynthOptions::default() }, &dir.path().join("data")).unwrap();
    std::fs::write(dir.path().join("run.cfg"), "manifest = data/manifest.csv\nepochs = 1\naugment = false\n").unwrap();
    let cfg = PipelineConfig::load(Some(&dir.path().join("run.cfg")), &[]).unwrap();
    let out = pipeline_all(&cfg, &dir.path().join("out")).unwrap();
    assert_eq!(out.history.epochs.len(), 1);
    assert!(out.report.overall.matrix.total() > 0);
    let paths: Vec<&str> = out.artifacts.iter().map(|a| a.path.as_str()).collect();
    for expected in ["config.cfg", "features.psdf", "history.csv", "manifest.csv", "model.psnn", "report/metrics.json"] {
        assert!(paths.contains(&expected), "{expected} missing from {paths:?}");
    }
    assert!(!paths.iter().any(|p| p.starts_with("augmented/") || p.starts_with("corpus/")));
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
}

#[test]
fn missing_audio_fails_at_extraction_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let entries = synth_corpus(&SynthOptions { participants: 4, ..SynthOptions::default() }, &dir.path().join("data")).unwrap();
    let victim = dir.path().join("data").join(&entries[5].audio_path);
    std::fs::remove_file(&victim).unwrap();
    let cfg = PipelineConfig::load(
        None,
        &[("manifest".into(), dir.path().join("data/manifest.csv").display().to_string()), ("augment".into(), "false".into())],
    )
    .unwrap();
    let err = pipeline_all(&cfg, &dir.path().join("out")).unwrap_err();
    assert!(matches!(err, PipelineError::Extraction { .. }), "{err}");
    assert!(err.to_string().contains(&victim.display().to_string()), "{err}");
}

#[test]
fn inconsistent_split_fractions_are_rejected() {
    let err = PipelineConfig::parse("split_train = 0.9\nsplit_val = 0.2\nsplit_test = 0.2\n").unwrap_err();
    assert!(err.to_string().contains("sum"), "{err}");
}
