//! Spectrum files and libraries.
//!
//! A library is either a directory of text spectra (one file per spectrum,
//! the id taken from the file stem) or a single packed JSON document holding
//! every spectrum on a common grid. Text files use `#` comments and one or
//! two whitespace- or comma-separated columns; see
//! [`rssnet_core::data::parse_intensities`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rssnet_core::data::{parse_intensities, parse_spectrum, Spectrum};
use rssnet_core::sparse::Dictionary;
use serde::{Deserialize, Serialize};

use crate::fsio::{read_json, read_text, write, write_json};
use crate::{Error, Result};

pub const PACKED_LIBRARY_VERSION: u32 = 1;

/// File extensions read from a library directory.
pub const SPECTRUM_EXTENSIONS: [&str; 4] = ["txt", "csv", "dat", "tsv"];

/// Every spectrum of a library on one grid, in library order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackedLibrary {
    pub format_version: u32,
    pub length: usize,
    pub spectra: Vec<Spectrum>,
}

impl PackedLibrary {
    pub fn new(spectra: Vec<Spectrum>) -> Result<Self> {
        let length = spectra.first().map_or(0, Spectrum::len);
        if let Some(s) = spectra.iter().find(|s| s.len() != length) {
            return Err(Error::Usage(format!(
                "packed library needs equal lengths; {} has {} points, expected {length}",
                s.id,
                s.len()
            )));
        }
        Ok(PackedLibrary {
            format_version: PACKED_LIBRARY_VERSION,
            length,
            spectra,
        })
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Reads one text spectrum: negative intensities are clipped and the
/// maximum scaled to 1. The id is the file stem and the source library the
/// parent directory name.
pub fn load_spectrum(path: &Path) -> Result<Spectrum> {
    let text = read_text(path)?;
    let library = path
        .parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_spectrum(&text, &stem(path), &library).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a text file as raw intensities, without clipping or scaling.
pub fn load_intensities(path: &Path) -> Result<Vec<f64>> {
    parse_intensities(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

fn spectrum_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.into(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| Error::Io {
                path: dir.into(),
                source,
            })?
            .path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| SPECTRUM_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads a library directory or packed file. With `length`, every spectrum
/// is resampled to that many points and max-normalised again.
///
/// Unreadable files in a directory are collected and reported together.
pub fn load_library(path: &Path, length: Option<usize>) -> Result<Vec<Spectrum>> {
    let spectra = if path.is_dir() {
        let files = spectrum_files(path)?;
        let mut out = Vec::with_capacity(files.len());
        let mut failures = Vec::new();
        for f in &files {
            match load_spectrum(f) {
                Ok(s) => out.push(s),
                Err(e) => failures.push(e.to_string()),
            }
        }
        if !failures.is_empty() {
            return Err(Error::Library(failures));
        }
        out
    } else {
        let packed: PackedLibrary = read_json(path)?;
        if packed.format_version != PACKED_LIBRARY_VERSION {
            return Err(Error::Mismatch {
                what: format!("packed library version of {}", path.display()),
                expected: PACKED_LIBRARY_VERSION.to_string(),
                found: packed.format_version.to_string(),
            });
        }
        packed.spectra
    };
    match length {
        None => Ok(spectra),
        Some(l) => spectra
            .into_iter()
            .map(|s| {
                let id = s.id.clone();
                s.prepared(l).map_err(|e| Error::format(path, format!("{id}: {e}")))
            })
            .collect(),
    }
}

/// Loads a library and turns it into a dictionary of unit-peak atoms on a
/// grid of `length` points.
pub fn load_dictionary(path: &Path, length: usize) -> Result<Dictionary> {
    Ok(Dictionary::from_spectra(&load_library(path, Some(length))?)?)
}

/// Two-column text: sample index and intensity, preceded by `#` header
/// lines. Values are written with shortest round-trip formatting.
pub fn spectrum_text(header: &[String], values: &[f64]) -> String {
    let mut s = String::new();
    for h in header {
        let _ = writeln!(s, "# {h}");
    }
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i} {v}");
    }
    s
}

/// Writes one `<id>.txt` per spectrum into `dir`.
pub fn write_library_dir(dir: &Path, spectra: &[Spectrum]) -> Result<()> {
    for s in spectra {
        let header = [format!("id: {}", s.id), format!("source_library: {}", s.source_library)];
        write(&dir.join(format!("{}.txt", s.id)), spectrum_text(&header, &s.values).as_bytes())?;
    }
    Ok(())
}

pub fn write_packed_library(path: &Path, spectra: &[Spectrum]) -> Result<()> {
    write_json(path, &PackedLibrary::new(spectra.to_vec())?)
}
