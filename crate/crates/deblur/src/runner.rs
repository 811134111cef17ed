//! Training and evaluation over datasets on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use deblur_core::kernelgen::DatasetRecord;
use deblur_core::metrics::{evaluate, EvalReport, Restorer};
use deblur_core::training::{LogRow, TrainConfig, Trainer, LOG_HEADER};
use deblur_core::unroll::{ModelParams, TvPreset};
use deblur_core::{Image, Kernel};

use crate::checkpoint::Checkpoint;
use crate::dataset::load_manifest;
use crate::error::{Error, Result};
use crate::fsutil::{create_dir, write_atomic};

pub const LOSS_LOG: &str = "loss.csv";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const REPORT_HEADER: &str = "record,psnr_db,isnr_db,ssim,kernel_rmse,shift_dy,shift_dx";
/// Printed with every evaluation, since it changes what the image
/// metrics mean.
pub const ALIGNMENT_NOTICE: &str =
    "note: restored images are circularly shifted (within the kernel radius) to best match the sharp image before PSNR, ISNR and SSIM";

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_image_mse: f64,
    pub mean_kernel_mse: f64,
    pub lr: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub latest: PathBuf,
    /// Epochs run by this call (not the resumed ones).
    pub epochs: Vec<EpochSummary>,
}

pub fn format_log_row(r: &LogRow) -> String {
    format!("{},{},{},{},{},{}", r.epoch, r.step, r.loss, r.image_mse, r.kernel_mse, r.lr)
}

/// Lines of an existing loss log that belong to epochs `<= epoch`.
fn log_prefix(path: &Path, epoch: usize) -> Result<String> {
    let mut out = format!("{LOG_HEADER}\n");
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(path, e)),
    };
    for line in text.lines().skip(1) {
        let row_epoch: usize = line
            .split(',')
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Manifest(format!("unreadable loss log line {line:?}")).in_file(path))?;
        if row_epoch <= epoch {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn check_resume(saved: &TrainConfig, requested: &TrainConfig) -> Result<()> {
    let mut a = saved.clone();
    a.epochs = requested.epochs;
    if &a != requested {
        return Err(Error::ConfigMismatch(format!("saved {saved:?}, requested {requested:?}")));
    }
    Ok(())
}

/// Trains on every record of `manifest`, writing `epoch_NNN.ckpt`,
/// `latest.ckpt` and `loss.csv` into `out_dir` after each epoch.
///
/// With `resume`, training continues from that checkpoint; its config must
/// match `config` except for the epoch count. The loss log keeps the rows
/// of already-completed epochs.
pub fn train(
    manifest: &Path,
    out_dir: &Path,
    config: &TrainConfig,
    resume: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<TrainOutcome> {
    config.validate()?;
    let named = load_manifest(manifest)?;
    let (names, records): (Vec<String>, Vec<DatasetRecord>) = named.into_iter().unzip();
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            check_resume(&ckpt.config, config)?;
            let mut t: Trainer = ckpt.into();
            t.config.epochs = config.epochs;
            t
        }
        None => Trainer::new(config.clone())?,
    };
    create_dir(out_dir)?;
    let log_path = out_dir.join(LOSS_LOG);
    let mut log = log_prefix(&log_path, trainer.epoch)?;
    let latest = out_dir.join(LATEST_CHECKPOINT);
    let mut epochs = Vec::new();
    while !trainer.is_finished() {
        let rows = trainer.run_epoch(&records).map_err(|e| match e {
            deblur_core::Error::NonFiniteLoss { record } => Error::NonFiniteLoss {
                record: names[record].clone(),
            },
            other => other.into(),
        })?;
        for r in &rows {
            log.push_str(&format_log_row(r));
            log.push('\n');
        }
        let ckpt = Checkpoint::of(&trainer);
        let path = out_dir.join(epoch_checkpoint_name(trainer.epoch));
        ckpt.save(&path)?;
        ckpt.save(&latest)?;
        write_atomic(&log_path, log.as_bytes())?;
        let n = rows.len() as f64;
        let summary = EpochSummary {
            epoch: trainer.epoch,
            mean_loss: rows.iter().map(|r| r.loss).sum::<f64>() / n,
            mean_image_mse: rows.iter().map(|r| r.image_mse).sum::<f64>() / n,
            mean_kernel_mse: rows.iter().map(|r| r.kernel_mse).sum::<f64>() / n,
            lr: rows[0].lr,
            checkpoint: path,
        };
        on_epoch(&summary);
        epochs.push(summary);
    }
    if epochs.is_empty() {
        // Nothing left to run; still leave a usable latest checkpoint.
        Checkpoint::of(&trainer).save(&latest)?;
        write_atomic(&log_path, log.as_bytes())?;
    }
    Ok(TrainOutcome {
        checkpoint: trainer.into(),
        latest,
        epochs,
    })
}

/// What turns a blurred image into estimates: trained parameters or the
/// classical preset.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Trained(ModelParams),
    Preset(TvPreset),
}

impl Model {
    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        Ok(Model::Trained(Checkpoint::load(path)?.params))
    }

    pub fn support(&self) -> usize {
        match self {
            Model::Trained(p) => p.support,
            Model::Preset(p) => p.support,
        }
    }

    /// Overrides the kernel support and/or turns on support restriction.
    pub fn with_support(mut self, support: Option<usize>, restrict: bool) -> Result<Self> {
        if let Some(k) = support {
            if k % 2 == 0 {
                return Err(deblur_core::Error::EvenSize(k).into());
            }
        }
        match &mut self {
            Model::Trained(p) => {
                p.support = support.unwrap_or(p.support);
                p.restrict_support |= restrict;
            }
            Model::Preset(p) => {
                p.support = support.unwrap_or(p.support);
                p.restrict_support |= restrict;
            }
        }
        Ok(self)
    }
}

impl Restorer for Model {
    fn restore(&self, blurred: &Image) -> deblur_core::Result<(Image, Kernel)> {
        match self {
            Model::Trained(p) => p.restore(blurred),
            Model::Preset(p) => p.restore(blurred),
        }
    }
}

/// Scores records on up to `threads` workers. Rows come back in input
/// order and do not depend on the worker count.
pub fn evaluate_records<R: Restorer + Sync + ?Sized>(
    restorer: &R,
    records: &[(String, DatasetRecord)],
    threads: usize,
) -> Result<EvalReport> {
    let threads = threads.clamp(1, records.len().max(1));
    if threads == 1 {
        return Ok(evaluate(restorer, records)?);
    }
    let chunk = records.len().div_ceil(threads);
    let parts: Vec<deblur_core::Result<EvalReport>> = thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|part| s.spawn(move || evaluate(restorer, part)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(records.len());
    for part in parts {
        rows.extend(part?.rows);
    }
    Ok(EvalReport { rows })
}

/// Per-record CSV followed by a `MEAN` row; infinities print as `inf`.
pub fn format_report(report: &EvalReport) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.record, r.psnr_db, r.isnr_db, r.ssim, r.kernel_rmse, r.shift_dy, r.shift_dx
        );
    }
    if !report.rows.is_empty() {
        let m = report.means();
        let _ = writeln!(
            out,
            "MEAN,{},{},{},{},{},{}",
            m.psnr_db, m.isnr_db, m.ssim, m.kernel_rmse, m.shift_dy, m.shift_dx
        );
    }
    out
}

/// Evaluates `model` on a manifest and writes the report CSV.
pub fn evaluate_manifest(manifest: &Path, model: &Model, out_csv: &Path, threads: usize) -> Result<EvalReport> {
    let records = load_manifest(manifest)?;
    let report = evaluate_records(model, &records, threads)?;
    write_atomic(out_csv, format_report(&report).as_bytes())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use deblur_core::metrics::EvalRow;

    #[test]
    fn report_layout() {
        let row = |name: &str, psnr: f64| EvalRow {
            record: name.into(),
            psnr_db: psnr,
            isnr_db: 1.5,
            ssim: 0.5,
            kernel_rmse: 0.25,
            shift_dy: -1,
            shift_dx: 0,
        };
        let report = EvalReport {
            rows: vec![row("a", f64::INFINITY), row("b", 20.0)],
        };
        let text = format_report(&report);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "a,inf,1.5,0.5,0.25,-1,0");
        assert_eq!(lines[2], "b,20,1.5,0.5,0.25,-1,0");
        assert_eq!(lines[3], "MEAN,inf,1.5,0.5,0.25,-1,0");
    }

    #[test]
    fn resume_allows_more_epochs_only() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        b.epochs = 40;
        assert!(check_resume(&a, &b).is_ok());
        b.learning_rate = 1.0;
        assert!(matches!(check_resume(&a, &b), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn preset_support_override() {
        let m = Model::Preset(TvPreset::prewitt(31)).with_support(Some(15), true).unwrap();
        assert_eq!(m.support(), 15);
        assert!(Model::Preset(TvPreset::prewitt(31)).with_support(Some(4), false).is_err());
    }
}
