//! Number formatting and small file helpers shared by the command line and
//! the table writers.

use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// 17 significant digits, so the text parses back to the same `f64`.
/// Plain decimals for moderate magnitudes, scientific otherwise.
pub fn sig17(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..16).contains(&mag) {
        format!("{x:.*}", (16 - mag) as usize)
    } else {
        format!("{x:.16e}")
    }
}

/// Two-column `x,y` CSV with a header line.
pub fn curve_csv(samples: &[(f64, f64)]) -> Result<String> {
    if samples.is_empty() {
        return Err(invalid("curve has no samples"));
    }
    let mut out = String::from("x,y\n");
    for &(x, y) in samples {
        out.push_str(&format!("{},{}\n", sig17(x), sig17(y)));
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

/// Writes a named curve to `path` as CSV.
pub fn export_curve(path: &Path, samples: &[(f64, f64)]) -> Result<()> {
    write_text(path, &curve_csv(samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            assert_eq!(sig17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn theta_row() {
        let csv = curve_csv(&[(2f64.ln(), 0.75)]).unwrap();
        let row = csv.lines().nth(1).unwrap();
        assert!(row.starts_with("0.69314718055994529,"));
        assert!(row.ends_with(",0.75000000000000000"));
        assert!(curve_csv(&[]).is_err());
    }
}
