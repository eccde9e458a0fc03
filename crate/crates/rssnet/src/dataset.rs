//! Dataset directories.
//!
//! ```text
//! <dir>/manifest.json   DatasetManifest (JSON)
//! <dir>/library.json    prepared library the manifest indexes (PackedLibrary)
//! <dir>/train.bin       samples of each split, see below
//! <dir>/val.bin
//! <dir>/test.bin
//! ```
//!
//! A sample file is a 60-byte header followed by one record per sample, all
//! integers and floats little-endian:
//!
//! ```text
//! magic "RSSD" | version u32 | split u32 (0 train, 1 val, 2 test)
//! components u32 | length u32 | count u64 | SHA-256 of manifest.json [32]
//! record: index u64 | mixed f32 x L | source 1 f32 x L | ... | source C f32 x L
//! ```
//!
//! The manifest hash ties a sample file to the manifest it was written
//! with. Sample values are stored at training precision; metadata (weights,
//! SNR, noise seed) stays in the manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rssnet_core::data::{
    measured_snr_db, mix_weighted, plan_dataset, realize_sample, DatasetConfig, DatasetManifest, MixtureSample,
    Spectrum, Split, MANIFEST_VERSION,
};
use serde::{Deserialize, Serialize};

use crate::fsio::{read, read_json, sha256, write, write_json};
use crate::library::{PackedLibrary, PACKED_LIBRARY_VERSION};
use crate::{Error, Result};

pub const SAMPLE_MAGIC: &[u8; 4] = b"RSSD";
pub const SAMPLE_FILE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LIBRARY_FILE: &str = "library.json";
const HEADER_LEN: usize = 60;

pub fn split_file(split: Split) -> String {
    format!("{}.bin", split.name())
}

fn split_code(split: Split) -> u32 {
    match split {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    }
}

/// Serialises the samples of one split.
pub fn encode_split(manifest_sha: &[u8; 32], split: Split, components: usize, length: usize, samples: &[&MixtureSample]) -> Vec<u8> {
    let record = 8 + 4 * (1 + components) * length;
    let mut out = Vec::with_capacity(HEADER_LEN + samples.len() * record);
    out.extend_from_slice(SAMPLE_MAGIC);
    out.extend_from_slice(&SAMPLE_FILE_VERSION.to_le_bytes());
    out.extend_from_slice(&split_code(split).to_le_bytes());
    out.extend_from_slice(&(components as u32).to_le_bytes());
    out.extend_from_slice(&(length as u32).to_le_bytes());
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    out.extend_from_slice(manifest_sha);
    for s in samples {
        out.extend_from_slice(&s.index.to_le_bytes());
        for v in s.mixed.iter().chain(s.sources.iter().flatten()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Sample values rounded the way a sample file stores them.
pub fn at_storage_precision(s: &MixtureSample) -> MixtureSample {
    let round = |v: &Vec<f64>| v.iter().map(|&x| x as f32 as f64).collect::<Vec<f64>>();
    MixtureSample {
        mixed: round(&s.mixed),
        sources: s.sources.iter().map(round).collect(),
        ..s.clone()
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

/// What `gen-data` reports after writing a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub manifest: PathBuf,
    pub manifest_sha256: String,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub warning: Option<String>,
}

/// Outcome of regenerating every sample from the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checked: usize,
    /// Indices whose stored bytes differ from the regenerated ones.
    pub mismatched: Vec<u64>,
    /// Largest `|measured SNR - recorded SNR|` in dB over all samples,
    /// measured on the full-precision regeneration.
    pub max_snr_error_db: f64,
}

/// An opened dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub library: Vec<Spectrum>,
    pub manifest_sha256: [u8; 32],
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let bytes = read(&manifest_path)?;
        let manifest: DatasetManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Mismatch {
                what: format!("manifest version of {}", manifest_path.display()),
                expected: MANIFEST_VERSION.to_string(),
                found: manifest.format_version.to_string(),
            });
        }
        let lib_path = dir.join(LIBRARY_FILE);
        let packed: PackedLibrary = read_json(&lib_path)?;
        if packed.format_version != PACKED_LIBRARY_VERSION {
            return Err(Error::format(&lib_path, format!("unsupported version {}", packed.format_version)));
        }
        let ids: Vec<&String> = packed.spectra.iter().map(|s| &s.id).collect();
        if ids != manifest.library.iter().collect::<Vec<_>>() {
            return Err(Error::format(&lib_path, "library ids differ from the manifest's library list"));
        }
        let sha = sha256(&bytes);
        Ok(Dataset {
            dir: dir.into(),
            manifest,
            library: packed.spectra,
            manifest_sha256: sha,
        })
    }

    pub fn manifest_sha256_hex(&self) -> String {
        hex::encode(self.manifest_sha256)
    }

    /// Reads the samples of one split, attaching metadata from the manifest.
    pub fn samples(&self, split: Split) -> Result<Vec<MixtureSample>> {
        let path = self.dir.join(split_file(split));
        let bytes = read(&path)?;
        let bad = |m: String| Err(Error::format(&path, m));
        if bytes.len() < HEADER_LEN || &bytes[..4] != SAMPLE_MAGIC {
            return bad("not a sample file".into());
        }
        let version = u32_at(&bytes, 4);
        if version != SAMPLE_FILE_VERSION {
            return Err(Error::Mismatch {
                what: format!("sample file version of {}", path.display()),
                expected: SAMPLE_FILE_VERSION.to_string(),
                found: version.to_string(),
            });
        }
        if u32_at(&bytes, 8) != split_code(split) {
            return bad(format!("file does not hold the {} split", split.name()));
        }
        let (c, l) = (u32_at(&bytes, 12) as usize, u32_at(&bytes, 16) as usize);
        if (c, l) != (self.manifest.components, self.manifest.length) {
            return bad(format!(
                "holds {c} sources of length {l}, manifest says {} of length {}",
                self.manifest.components, self.manifest.length
            ));
        }
        if bytes[28..60] != self.manifest_sha256 {
            return Err(Error::Mismatch {
                what: format!("manifest hash recorded in {}", path.display()),
                expected: self.manifest_sha256_hex(),
                found: hex::encode(&bytes[28..60]),
            });
        }
        let count = u64_at(&bytes, 20) as usize;
        let record = 8 + 4 * (1 + c) * l;
        if bytes.len() != HEADER_LEN + count * record {
            return bad(format!("expected {count} records of {record} bytes, file has {} bytes", bytes.len()));
        }
        let mut out = Vec::with_capacity(count);
        for chunk in bytes[HEADER_LEN..].chunks_exact(record) {
            let index = u64_at(chunk, 0);
            let Some(r) = self.manifest.records.get(index as usize).filter(|r| r.index == index && r.split == split) else {
                return bad(format!("record {index} is not a {} sample of the manifest", split.name()));
            };
            let floats: Vec<f64> = chunk[8..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            let mut parts = floats.chunks_exact(l).map(<[f64]>::to_vec);
            out.push(MixtureSample {
                index,
                split,
                mixed: parts.next().expect("mixed"),
                sources: parts.collect(),
                weights: r.weights.clone(),
                snr_db: r.snr_db,
                noise_seed: r.noise_seed,
            });
        }
        Ok(out)
    }

    /// Regenerates every sample from manifest and library and compares the
    /// stored bytes.
    pub fn verify(&self) -> Result<VerifyReport> {
        let mut mismatched = Vec::new();
        let mut checked = 0;
        let mut worst: f64 = 0.0;
        for split in Split::ALL {
            let regenerated: Vec<MixtureSample> = self
                .manifest
                .split(split)
                .map(|r| realize_sample(r, &self.library))
                .collect::<rssnet_core::Result<_>>()?;
            for s in &regenerated {
                let refs: Vec<&[f64]> = s.sources.iter().map(Vec::as_slice).collect();
                let clean = mix_weighted(&refs, &s.weights)?;
                let noise: Vec<f64> = s.mixed.iter().zip(&clean).map(|(y, m)| y - m).collect();
                worst = worst.max((measured_snr_db(&clean, &noise) - s.snr_db).abs());
            }
            let stored = self.samples(split)?;
            let c = self.manifest.components;
            let l = self.manifest.length;
            for (a, b) in regenerated.iter().zip(&stored) {
                let fresh = encode_split(&self.manifest_sha256, split, c, l, &[a]);
                let kept = encode_split(&self.manifest_sha256, split, c, l, &[b]);
                if fresh != kept || a.index != b.index {
                    mismatched.push(a.index);
                }
            }
            if regenerated.len() != stored.len() {
                return Err(Error::format(
                    self.dir.join(split_file(split)),
                    format!("{} samples stored, manifest lists {}", stored.len(), regenerated.len()),
                ));
            }
            checked += stored.len();
        }
        Ok(VerifyReport {
            checked,
            mismatched,
            max_snr_error_db: worst,
        })
    }
}

/// Plans, realises (in parallel; every sample depends only on its record)
/// and writes a dataset.
pub fn generate(dir: &Path, config: &DatasetConfig, library: &[Spectrum]) -> Result<DatasetSummary> {
    let manifest = plan_dataset(config, library)?;
    let samples: Vec<MixtureSample> = manifest
        .records
        .par_iter()
        .map(|r| realize_sample(r, library))
        .collect::<rssnet_core::Result<_>>()?;
    write_dataset(dir, &manifest, library, &samples)
}

pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, library: &[Spectrum], samples: &[MixtureSample]) -> Result<DatasetSummary> {
    let manifest_path = dir.join(MANIFEST_FILE);
    write_json(&manifest_path, manifest)?;
    let bytes = read(&manifest_path)?;
    let sha = sha256(&bytes);
    write_json(&dir.join(LIBRARY_FILE), &PackedLibrary::new(library.to_vec())?)?;
    for split in Split::ALL {
        let part: Vec<&MixtureSample> = samples.iter().filter(|s| s.split == split).collect();
        let encoded = encode_split(&sha, split, manifest.components, manifest.length, &part);
        write(&dir.join(split_file(split)), &encoded)?;
    }
    Ok(DatasetSummary {
        manifest: manifest_path,
        manifest_sha256: hex::encode(sha),
        train: manifest.sizes.train,
        val: manifest.sizes.val,
        test: manifest.sizes.test,
        warning: rssnet_core::data::pair_diversity_warning(library.len(), manifest.components, manifest.sizes.total()),
    })
}
