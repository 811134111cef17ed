//! `KERNEL v1` text files.
//!
//! ```text
//! KERNEL v1
//! 3 3
//! 0.0000000000000000e0 1.0000000000000000e-1 0.0000000000000000e0
//! ...
//! ```
//!
//! Weights are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fs;
use std::path::Path;

use deblur_core::Kernel;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC_LINE: &str = "KERNEL v1";

pub fn format_kernel(kernel: &Kernel) -> String {
    let k = kernel.size();
    let mut out = format!("{MAGIC_LINE}\n{k} {k}\n");
    for row in kernel.weights().chunks(k) {
        let line: Vec<String> = row.iter().map(|w| format!("{w:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses and validates a kernel file. Sums within 1e-6 of one are
/// renormalized, anything further off is rejected.
pub fn parse_kernel(text: &str) -> Result<Kernel> {
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(MAGIC_LINE) {
        return Err(Error::KernelFormat(format!("first line must be {MAGIC_LINE:?}")));
    }
    let dims = lines
        .next()
        .ok_or_else(|| Error::KernelFormat("missing size line".into()))?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::KernelFormat(format!("bad size {t:?}"))))
        .collect::<Result<_>>()?;
    let size = match dims[..] {
        [h, w] if h == w && h > 0 => h,
        _ => return Err(Error::KernelFormat("size line must be two equal positive integers".into())),
    };
    if size % 2 == 0 {
        return Err(deblur_core::Error::EvenSize(size).into());
    }
    let mut weights = Vec::with_capacity(size * size);
    for r in 0..size {
        let line = lines
            .next()
            .ok_or_else(|| Error::KernelFormat(format!("expected {size} rows, found {r}")))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::KernelFormat(format!("bad weight {t:?} in row {r}"))))
            .collect::<Result<_>>()?;
        if row.len() != size {
            return Err(Error::KernelFormat(format!("row {r} has {} entries, expected {size}", row.len())));
        }
        weights.extend(row);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::KernelFormat("trailing content after the last row".into()));
    }
    Ok(Kernel::new(size, weights)?)
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<Kernel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kernel(&text).map_err(|e| e.in_file(path))
}

pub fn save_kernel(kernel: &Kernel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_kernel(kernel).as_bytes())
}
