//! Deterministic text emission: 17-significant-digit floats, LF-terminated
//! CSV, and sorted-key JSON. Identical runs must produce identical bytes.

use crate::error::Result;
use std::io::Write;
use std::path::Path;

/// Decimal form with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text from a header and rows of floats, LF line endings.
pub fn csv_string<I>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let line = row.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Write bytes through a temp file + rename so concurrent readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<u64> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension(format!(
        "tmp{}",
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all().ok();
    }
    std::fs::rename(&tmp, path)?;
    Ok(bytes.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_round_trips() {
        for &x in &[0.25, 1.0 / 3.0, -1.2071067811865476e8, 5e-324, 0.0] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn csv_shape() {
        let text = csv_string("value,mass", vec![vec![1.0, 0.5]]);
        assert!(text.starts_with("value,mass\n"));
        assert!(text.ends_with('\n'));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn empty_rows_yield_header_only() {
        let text = csv_string("a,b", Vec::<Vec<f64>>::new());
        assert_eq!(text, "a,b\n");
    }
}
