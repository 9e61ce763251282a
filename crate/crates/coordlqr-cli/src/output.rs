//! File emission: atomic writes and locale-free numeric formatting.

use std::fs;
use std::io;
use std::path::Path;

/// 17 significant digits, exponent notation, '.' decimal separator.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write through a temp file in the same directory, then rename, so readers
/// never observe a half-written artifact.
pub fn write_atomic(path: &Path, content: &str) -> io::Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)
}
