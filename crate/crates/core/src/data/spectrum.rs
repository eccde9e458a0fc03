use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One pure or mixed intensity vector with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub id: String,
    pub source_library: String,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(id: impl Into<String>, source_library: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::Empty(format!("spectrum {id}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("spectrum {id} at index {i}")));
        }
        Ok(Spectrum {
            id,
            source_library: source_library.into(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Clips negative intensities and scales so the maximum is exactly 1.
    pub fn normalized(mut self) -> Result<Self> {
        self.values = max_normalize(&self.values).map_err(|e| match e {
            Error::Domain(_) => Error::Domain(format!("spectrum {} has no positive intensity", self.id)),
            other => other,
        })?;
        Ok(self)
    }

    /// Resamples to `target` points; see [`standardize_length`].
    pub fn standardized(mut self, target: usize) -> Result<Self> {
        self.values = standardize_length(&self.values, target)?;
        Ok(self)
    }

    /// Standardises to `target` points and max-normalises, in that order, so
    /// the stored maximum is exactly 1 on the final grid.
    pub fn prepared(self, target: usize) -> Result<Self> {
        self.standardized(target)?.normalized()
    }
}

/// Clips to `>= 0` and divides by the maximum.
pub fn max_normalize(values: &[f64]) -> Result<Vec<f64>> {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(max > 0.0) {
        return Err(Error::Domain("cannot max-normalise a spectrum without positive values".into()));
    }
    Ok(values.iter().map(|&v| if v > 0.0 { v / max } else { 0.0 }).collect())
}

/// Linear interpolation onto `target` uniformly spaced positions spanning the
/// original index range. Both endpoints are kept exactly.
pub fn standardize_length(values: &[f64], target: usize) -> Result<Vec<f64>> {
    if target < 2 {
        return Err(Error::Config(format!("target length must be at least 2, got {target}")));
    }
    let n = values.len();
    if n < 2 {
        return Err(Error::Contract(format!("cannot resample a spectrum of length {n}")));
    }
    if n == target {
        return Ok(values.to_vec());
    }
    let scale = (n - 1) as f64 / (target - 1) as f64;
    let mut out = Vec::with_capacity(target);
    for i in 0..target {
        if i == target - 1 {
            out.push(values[n - 1]);
            continue;
        }
        let x = i as f64 * scale;
        let j = (x as usize).min(n - 2);
        let f = x - j as f64;
        out.push(values[j] + f * (values[j + 1] - values[j]));
    }
    Ok(out)
}

/// Intensity column of a text spectrum.
///
/// Lines are split on whitespace and commas; blank lines and lines starting
/// with `#` are skipped. One column is read as intensity; two columns as
/// (wavenumber, intensity).
pub fn parse_intensities(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut columns = None;
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.is_empty() || fields.len() > 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 1 or 2 columns, found {}", fields.len()),
            });
        }
        match columns {
            None => columns = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {c} columns, found {}", fields.len()),
                })
            }
            _ => {}
        }
        let parse = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("not a number: {s:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "non-finite value".to_string(),
                });
            }
            Ok(v)
        };
        if fields.len() == 2 {
            parse(fields[0])?;
        }
        out.push(parse(fields[fields.len() - 1])?);
    }
    if out.is_empty() {
        return Err(Error::Empty("spectrum file has no data lines".into()));
    }
    Ok(out)
}

/// Parses, clips and max-normalises a text spectrum at its native length.
pub fn parse_spectrum(text: &str, id: &str, source_library: &str) -> Result<Spectrum> {
    Spectrum::new(id, source_library, parse_intensities(text)?)?.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn resampling_examples() {
        assert_eq!(standardize_length(&[0.0, 1.0], 3).unwrap(), vec![0.0, 0.5, 1.0]);
        let v: Vec<f64> = (0..1024).map(|i| (i as f64).sin()).collect();
        assert_eq!(standardize_length(&v, 1024).unwrap(), v);
        assert!(standardize_length(&v, 1).is_err());
        assert!(standardize_length(&[1.0], 4).is_err());
    }

    #[test]
    fn parse_examples() {
        let s = parse_spectrum("# header\n0\n5\n10\n", "a", "lib").unwrap();
        assert_eq!(s.values, vec![0.0, 0.5, 1.0]);
        let s = parse_spectrum("100, 2\n101, -1\n102 4\n", "b", "lib").unwrap();
        assert_eq!(s.values, vec![0.5, 0.0, 1.0]);
        assert!(matches!(parse_intensities("1\nx\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_intensities("# only\n\n"), Err(Error::Empty(_))));
        assert!(matches!(parse_intensities("1 2\n3\n"), Err(Error::Parse { line: 2, .. })));
    }
}
