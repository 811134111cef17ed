use std::path::Path;

use deblur::checkpoint::Checkpoint;
use deblur::dataset::{build_synthetic_dataset, load_manifest, DatasetSummary};
use deblur::runner::{evaluate_manifest, evaluate_records, train, Model, LATEST_CHECKPOINT, LOSS_LOG};
use deblur::Error;
use deblur_core::kernelgen::linear_motion_kernel;
use deblur_core::training::TrainConfig;

fn dataset(dir: &Path, scenes: usize) -> DatasetSummary {
    let kernels = vec![
        linear_motion_kernel(0.3, 3.0, 5).unwrap(),
        linear_motion_kernel(1.9, 3.0, 5).unwrap(),
    ];
    build_synthetic_dataset(scenes, &kernels, 0.01, 16, dir, 2).unwrap()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        layers: 2,
        channels: 2,
        support: 5,
        epochs,
        init_threshold: 0.03,
        init_lambda: 0.03,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn one_record_one_epoch_is_one_step() {
    let data = tempfile::tempdir().unwrap();
    let kernels = vec![linear_motion_kernel(0.0, 3.0, 5).unwrap()];
    let summary = build_synthetic_dataset(1, &kernels, 0.01, 16, data.path(), 0).unwrap();
    let out = tempfile::tempdir().unwrap();
    let outcome = train(&summary.manifest, out.path(), &config(1), None, |_| {}).unwrap();
    assert_eq!(outcome.checkpoint.adam.step, 1);
    let log = std::fs::read_to_string(out.path().join(LOSS_LOG)).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,step,loss,image_mse,kernel_mse,lr");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,1,"));
    assert!(out.path().join("epoch_001.ckpt").exists());
}

#[test]
fn resumed_run_matches_uninterrupted_bitwise() {
    let data = tempfile::tempdir().unwrap();
    let summary = dataset(data.path(), 2);
    let full = tempfile::tempdir().unwrap();
    train(&summary.manifest, full.path(), &config(3), None, |_| {}).unwrap();

    let split = tempfile::tempdir().unwrap();
    train(&summary.manifest, split.path(), &config(1), None, |_| {}).unwrap();
    let resume = split.path().join("epoch_001.ckpt");
    let outcome = train(&summary.manifest, split.path(), &config(3), Some(&resume), |_| {}).unwrap();
    assert_eq!(outcome.epochs.len(), 2);

    for name in [LATEST_CHECKPOINT, "epoch_002.ckpt", "epoch_003.ckpt", LOSS_LOG] {
        let a = std::fs::read(full.path().join(name)).unwrap();
        let b = std::fs::read(split.path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn resume_rejects_a_different_config() {
    let data = tempfile::tempdir().unwrap();
    let summary = dataset(data.path(), 1);
    let out = tempfile::tempdir().unwrap();
    train(&summary.manifest, out.path(), &config(1), None, |_| {}).unwrap();
    let mut other = config(2);
    other.kappa = 1.0;
    let err = train(&summary.manifest, out.path(), &other, Some(&out.path().join(LATEST_CHECKPOINT)), |_| {});
    assert!(matches!(err, Err(Error::ConfigMismatch(_))));
}

#[test]
fn singular_start_names_the_record() {
    let data = tempfile::tempdir().unwrap();
    let summary = dataset(data.path(), 1);
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(1);
    cfg.init_threshold = 0.0;
    cfg.init_lambda = 0.0;
    match train(&summary.manifest, out.path(), &cfg, None, |_| {}) {
        Err(Error::NonFiniteLoss { record }) => assert!(record == "00000" || record == "00001"),
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

#[test]
fn checkpoint_files_round_trip() {
    let data = tempfile::tempdir().unwrap();
    let summary = dataset(data.path(), 1);
    let out = tempfile::tempdir().unwrap();
    train(&summary.manifest, out.path(), &config(1), None, |_| {}).unwrap();
    let path = out.path().join(LATEST_CHECKPOINT);
    let original = std::fs::read(&path).unwrap();
    let copy = out.path().join("copy.ckpt");
    Checkpoint::load(&path).unwrap().save(&copy).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), original);

    std::fs::write(&copy, &original[..original.len() / 2]).unwrap();
    assert!(matches!(Checkpoint::load(&copy).unwrap_err().root(), Error::CorruptCheckpoint(_)));
    let mut v99 = original.clone();
    v99[8..12].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(&copy, &v99).unwrap();
    assert!(matches!(Checkpoint::load(&copy).unwrap_err().root(), Error::VersionMismatch { found: 99, .. }));
}

#[test]
fn evaluation_is_idempotent_and_thread_independent() {
    let data = tempfile::tempdir().unwrap();
    let summary = dataset(data.path(), 2);
    let out = tempfile::tempdir().unwrap();
    train(&summary.manifest, out.path(), &config(1), None, |_| {}).unwrap();
    let model = Model::from_checkpoint(&out.path().join(LATEST_CHECKPOINT)).unwrap();
    let a = out.path().join("a.csv");
    let b = out.path().join("b.csv");
    let report = evaluate_manifest(&summary.manifest, &model, &a, 1).unwrap();
    evaluate_manifest(&summary.manifest, &model, &b, 3).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let text = std::fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "record,psnr_db,isnr_db,ssim,kernel_rmse,shift_dy,shift_dx");
    assert_eq!(lines.len(), 2 + report.rows.len());
    let mean: Vec<&str> = lines.last().unwrap().split(',').collect();
    assert_eq!(mean[0], "MEAN");
    for col in 1..7 {
        let values: Vec<f64> = lines[1..lines.len() - 1]
            .iter()
            .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
            .collect();
        let expected = values.iter().sum::<f64>() / values.len() as f64;
        assert_eq!(mean[col].parse::<f64>().unwrap(), expected, "column {col}");
    }
}

#[test]
fn passthrough_restorer_scores_perfectly() {
    struct Oracle(Vec<deblur_core::kernelgen::DatasetRecord>);
    impl deblur_core::metrics::Restorer for Oracle {
        fn restore(&self, blurred: &deblur_core::Image) -> deblur_core::Result<(deblur_core::Image, deblur_core::Kernel)> {
            let r = self.0.iter().find(|r| &r.blurred == blurred).unwrap();
            Ok((r.sharp.clone(), r.kernel.clone()))
        }
    }
    let data = tempfile::tempdir().unwrap();
    let summary = dataset(data.path(), 2);
    let records = load_manifest(&summary.manifest).unwrap();
    let oracle = Oracle(records.iter().map(|(_, r)| r.clone()).collect());
    let report = evaluate_records(&oracle, &records, 2).unwrap();
    for row in &report.rows {
        assert_eq!(row.psnr_db, f64::INFINITY);
        assert_eq!(row.ssim, 1.0);
        assert_eq!(row.kernel_rmse, 0.0);
    }
    let text = deblur::runner::format_report(&report);
    assert!(text.lines().last().unwrap().starts_with("MEAN,inf,"));
}
