//! Kernel banks and blurred datasets on disk.
//!
//! A dataset directory holds `manifest.csv` and a `records/` folder with
//! three files per record: `NNNNN_blurred.pgm`, `NNNNN_sharp.pgm` and
//! `NNNNN_kernel.txt`. Manifest paths are relative to the manifest.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use deblur_core::kernelgen::{derive_seed, synthesize_blurred, synthetic_scene, DatasetRecord, MotionSpec};
use deblur_core::{Image, Kernel, RealPlane};

use crate::error::{Error, Result};
use crate::fsutil::{create_dir, files_with_extension, write_atomic};
use crate::kernel_file::{load_kernel, save_kernel};
use crate::pgm::{self, load_image, save_image};

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const MANIFEST_HEADER: [&str; 4] = ["blurred", "sharp", "kernel", "sigma"];
const RECORD_DIR: &str = "records";
/// Salt separating scene streams from noise streams of the same seed.
const SCENE_STREAM: u64 = 0x5CE9_E000_0000_0000;

/// Grid of linear kernels plus optional random-walk kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    pub angles: usize,
    pub lengths: usize,
    pub min_length: f64,
    pub max_length: f64,
    pub support: usize,
    pub trajectories: usize,
    pub seed: u64,
}

impl KernelBank {
    /// `(file stem, spec)` pairs. Angles are `iπ/N` for `i < N` (π would
    /// duplicate 0), lengths are evenly spaced over the closed range.
    pub fn specs(&self) -> Vec<(String, MotionSpec)> {
        let mut out = Vec::new();
        for i in 0..self.angles {
            let angle = PI * i as f64 / self.angles as f64;
            for j in 0..self.lengths {
                let length = if self.lengths == 1 {
                    self.min_length
                } else {
                    self.min_length + (self.max_length - self.min_length) * j as f64 / (self.lengths - 1) as f64
                };
                out.push((format!("linear_a{i:03}_l{j:03}"), MotionSpec::linear(angle, length, self.support)));
            }
        }
        for t in 0..self.trajectories {
            let seed = derive_seed(self.seed, t as u64);
            out.push((format!("trajectory_{t:03}"), MotionSpec::trajectory(seed, self.support)));
        }
        out
    }

    /// Writes one `KERNEL v1` file per spec and returns the paths.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        if !(self.min_length > 0.0 && self.min_length <= self.max_length) {
            return Err(Error::InvalidArgument("need 0 < min length <= max length".into()));
        }
        create_dir(out_dir)?;
        let mut paths = Vec::new();
        for (stem, spec) in self.specs() {
            let kernel = spec.kernel()?;
            let path = out_dir.join(format!("{stem}.txt"));
            save_kernel(&kernel, &path)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Every `.txt` kernel in `dir`, sorted by file name.
pub fn load_kernel_dir(dir: &Path) -> Result<Vec<Kernel>> {
    let paths = files_with_extension(dir, "txt")?;
    if paths.is_empty() {
        return Err(Error::NoKernels(dir.to_path_buf()));
    }
    paths.iter().map(load_kernel).collect()
}

/// The `patch × patch` window at the image center, or `None` if the image
/// is smaller than that.
pub fn centered_crop(image: &Image, patch: usize) -> Option<Image> {
    let (h, w) = image.dims();
    if patch == 0 || patch > h || patch > w {
        return None;
    }
    let (top, left) = ((h - patch) / 2, (w - patch) / 2);
    Some(RealPlane::from_fn(patch, patch, |r, c| image.get(top + r, left + c)))
}

/// Rounds to the grid a saved image will land on, so a record's sharp
/// image on disk is exactly the one that was blurred.
fn quantize(image: &Image) -> Image {
    let m = pgm::DEFAULT_MAXVAL as f64;
    image.map(|p| (p.clamp(0.0, 1.0) * m).round() / m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub blurred: String,
    pub sharp: String,
    pub kernel: String,
    pub sigma: f64,
}

#[derive(Debug, Default)]
pub struct DatasetSummary {
    pub records: usize,
    pub manifest: PathBuf,
    /// Source images that were not used, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Crops every PGM in `image_dir` (sorted by name), blurs each crop with
/// every kernel and writes the records plus a manifest.
pub fn build_dataset(
    image_dir: &Path,
    kernels: &[Kernel],
    sigma: f64,
    patch: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<DatasetSummary> {
    let files = files_with_extension(image_dir, "pgm")?;
    if files.is_empty() {
        return Err(Error::EmptyDirectory(image_dir.to_path_buf()));
    }
    let mut scenes = Vec::new();
    let mut skipped = Vec::new();
    for path in files {
        match load_image(&path) {
            Ok(img) => match centered_crop(&img, patch) {
                Some(crop) => scenes.push(crop),
                None => {
                    let (h, w) = img.dims();
                    skipped.push((path, format!("{h}x{w} is smaller than the {patch}x{patch} patch")));
                }
            },
            Err(e) => skipped.push((path, e.root().to_string())),
        }
    }
    if scenes.is_empty() {
        return Err(Error::NoUsableImages(image_dir.to_path_buf()));
    }
    let mut summary = write_records(&scenes, kernels, sigma, out_dir, seed)?;
    summary.skipped = skipped;
    Ok(summary)
}

/// Same as [`build_dataset`] with `count` generated piecewise-smooth scenes
/// in place of a photo directory.
pub fn build_synthetic_dataset(
    count: usize,
    kernels: &[Kernel],
    sigma: f64,
    patch: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<DatasetSummary> {
    if count == 0 || patch == 0 {
        return Err(Error::InvalidArgument("scene count and patch must be positive".into()));
    }
    let scenes: Vec<Image> = (0..count)
        .map(|i| synthetic_scene(patch, patch, derive_seed(seed ^ SCENE_STREAM, i as u64)))
        .collect();
    write_records(&scenes, kernels, sigma, out_dir, seed)
}

fn write_records(scenes: &[Image], kernels: &[Kernel], sigma: f64, out_dir: &Path, seed: u64) -> Result<DatasetSummary> {
    if kernels.is_empty() {
        return Err(Error::InvalidArgument("at least one kernel is required".into()));
    }
    let record_dir = out_dir.join(RECORD_DIR);
    create_dir(&record_dir)?;
    let mut manifest = csv::Writer::from_writer(Vec::new());
    manifest.write_record(MANIFEST_HEADER)?;
    let mut index = 0usize;
    for scene in scenes {
        let sharp = quantize(scene);
        for kernel in kernels {
            let blurred = synthesize_blurred(&sharp, kernel, sigma, derive_seed(seed, index as u64))?;
            let stem = format!("{index:05}");
            let names = [
                format!("{RECORD_DIR}/{stem}_blurred.pgm"),
                format!("{RECORD_DIR}/{stem}_sharp.pgm"),
                format!("{RECORD_DIR}/{stem}_kernel.txt"),
            ];
            save_image(&blurred, out_dir.join(&names[0]))?;
            save_image(&sharp, out_dir.join(&names[1]))?;
            save_kernel(kernel, out_dir.join(&names[2]))?;
            manifest.write_record([names[0].as_str(), &names[1], &names[2], &sigma.to_string()])?;
            index += 1;
        }
    }
    let bytes = manifest
        .into_inner()
        .map_err(|e| Error::Manifest(e.to_string()))?;
    let manifest_path = out_dir.join(MANIFEST_NAME);
    write_atomic(&manifest_path, &bytes)?;
    Ok(DatasetSummary {
        records: index,
        manifest: manifest_path,
        skipped: Vec::new(),
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::from(e).in_file(path))?;
    let header = reader.headers().map_err(|e| Error::from(e).in_file(path))?;
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Manifest(format!("header must be {:?}", MANIFEST_HEADER.join(","))).in_file(path));
    }
    let mut out = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::from(e).in_file(path))?;
        let bad = |msg: String| Error::Manifest(format!("row {}: {msg}", line + 1)).in_file(path);
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", row.len())));
        }
        let sigma: f64 = row[3].parse().map_err(|_| bad(format!("bad sigma {:?}", &row[3])))?;
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(bad(format!("sigma must be finite and nonnegative, got {sigma}")));
        }
        out.push(ManifestEntry {
            blurred: row[0].to_string(),
            sharp: row[1].to_string(),
            kernel: row[2].to_string(),
            sigma,
        });
    }
    if out.is_empty() {
        return Err(Error::Manifest("no records".into()).in_file(path));
    }
    Ok(out)
}

/// Record name shown in reports: the blurred file stem without a
/// `_blurred` suffix.
pub fn record_name(entry: &ManifestEntry) -> String {
    let stem = Path::new(&entry.blurred)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.blurred.clone());
    stem.strip_suffix("_blurred").map(str::to_string).unwrap_or(stem)
}

/// Loads every record of a manifest, in manifest order.
pub fn load_manifest(path: &Path) -> Result<Vec<(String, DatasetRecord)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_manifest(path)?
        .into_iter()
        .map(|entry| {
            let blurred = load_image(base.join(&entry.blurred))?;
            let sharp = load_image(base.join(&entry.sharp))?;
            let kernel = load_kernel(base.join(&entry.kernel))?;
            let record = DatasetRecord::new(blurred, sharp, kernel, entry.sigma)
                .map_err(|e| Error::from(e).in_file(base.join(&entry.blurred)))?;
            Ok((record_name(&entry), record))
        })
        .collect()
}
