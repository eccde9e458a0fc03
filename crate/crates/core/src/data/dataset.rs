use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mixing::{mix_weighted, synthesize_noise, MIN_ALPHA};
use super::Spectrum;
use crate::{derive_seed, Error, Result};

/// Manifest layout version written by [`plan_dataset`].
pub const MANIFEST_VERSION: u32 = 1;

// Field tags mixed into per-sample seeds.
const TAG_SOURCES: u64 = 1;
const TAG_WEIGHTS: u64 = 2;
const TAG_SNR: u64 = 3;
const TAG_NOISE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    fn split_of(&self, index: usize) -> Split {
        if index < self.train {
            Split::Train
        } else if index < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Parameters of a synthetic mixture dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    pub sizes: SplitSizes,
    /// Inclusive range the per-sample SNR is drawn from, in dB.
    pub snr_db: [f64; 2],
    pub master_seed: u64,
    /// Sources per mixture.
    pub components: usize,
    /// Spectrum length every library entry must already have.
    pub length: usize,
}

/// Everything needed to regenerate one sample from the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: u64,
    pub split: Split,
    /// Library positions of the sources, in mixture order.
    pub sources: Vec<usize>,
    pub source_ids: Vec<String>,
    /// Mixing weights; `weights[0]` is the mixing factor alpha for two sources.
    pub weights: Vec<f64>,
    pub snr_db: f64,
    pub noise_seed: u64,
}

impl SampleRecord {
    pub fn alpha(&self) -> f64 {
        self.weights[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub name: String,
    pub master_seed: u64,
    pub components: usize,
    pub length: usize,
    pub sizes: SplitSizes,
    pub snr_db_range: [f64; 2],
    /// Library ids in library order; `SampleRecord::sources` index into it.
    pub library: Vec<String>,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

/// One supervised example: the noisy mixture and its clean sources.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSample {
    pub index: u64,
    pub split: Split,
    pub mixed: Vec<f64>,
    pub sources: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub snr_db: f64,
    pub noise_seed: u64,
}

fn check_config(config: &DatasetConfig, library: &[Spectrum]) -> Result<()> {
    if config.components < 2 {
        return Err(Error::Config(format!("need at least 2 components, got {}", config.components)));
    }
    if library.len() < config.components {
        return Err(Error::Config(format!(
            "library has {} spectra, need at least {}",
            library.len(),
            config.components
        )));
    }
    let [lo, hi] = config.snr_db;
    if !(lo > 0.0 && hi < 80.0 && lo <= hi) {
        return Err(Error::Config(format!("SNR range [{lo}, {hi}] dB must lie inside (0, 80)")));
    }
    if let Some(s) = library.iter().find(|s| s.len() != config.length) {
        return Err(Error::Config(format!(
            "library spectrum {} has length {}, expected {}",
            s.id,
            s.len(),
            config.length
        )));
    }
    Ok(())
}

/// Mixing weights on the simplex with every weight at least
/// `MIN_ALPHA / (components - 1)`; for two sources alpha is uniform on
/// `[MIN_ALPHA, 1 - MIN_ALPHA]`.
fn draw_weights(rng: &mut ChaCha8Rng, components: usize) -> Vec<f64> {
    if components == 2 {
        let a = rng.random_range(MIN_ALPHA..=1.0 - MIN_ALPHA);
        return alloc::vec![a, 1.0 - a];
    }
    let floor = MIN_ALPHA / (components - 1) as f64;
    loop {
        // normalised unit exponentials are uniform on the simplex
        let e: Vec<f64> = (0..components)
            .map(|_| -Float::ln(1.0 - rng.random::<f64>()))
            .collect();
        let s: f64 = e.iter().sum();
        let w: Vec<f64> = e.into_iter().map(|v| v / s).collect();
        if w.iter().all(|&v| v >= floor) {
            return w;
        }
    }
}

/// Draws every sample's sources, weights, SNR and noise seed. Record `i`
/// depends only on `(master_seed, i)`.
pub fn plan_dataset(config: &DatasetConfig, library: &[Spectrum]) -> Result<DatasetManifest> {
    check_config(config, library)?;
    let total = config.sizes.total();
    let mut records = Vec::with_capacity(total);
    for i in 0..total {
        let index = i as u64;
        let seed = |tag| derive_seed(config.master_seed, index, tag);
        let mut rng = ChaCha8Rng::seed_from_u64(seed(TAG_SOURCES));
        let sources = rand::seq::index::sample(&mut rng, library.len(), config.components).into_vec();
        let weights = draw_weights(&mut ChaCha8Rng::seed_from_u64(seed(TAG_WEIGHTS)), config.components);
        let [lo, hi] = config.snr_db;
        let snr_db = ChaCha8Rng::seed_from_u64(seed(TAG_SNR)).random_range(lo..=hi);
        records.push(SampleRecord {
            index,
            split: config.sizes.split_of(i),
            source_ids: sources.iter().map(|&s| library[s].id.clone()).collect(),
            sources,
            weights,
            snr_db,
            noise_seed: seed(TAG_NOISE),
        });
    }
    Ok(DatasetManifest {
        format_version: MANIFEST_VERSION,
        name: config.name.clone(),
        master_seed: config.master_seed,
        components: config.components,
        length: config.length,
        sizes: config.sizes,
        snr_db_range: config.snr_db,
        library: library.iter().map(|s| s.id.clone()).collect(),
        records,
    })
}

/// Rebuilds one sample from its record.
pub fn realize_sample(record: &SampleRecord, library: &[Spectrum]) -> Result<MixtureSample> {
    let mut sources = Vec::with_capacity(record.sources.len());
    for (&s, id) in record.sources.iter().zip(&record.source_ids) {
        let spec = library
            .get(s)
            .ok_or_else(|| Error::Contract(format!("record {} references missing library entry {s}", record.index)))?;
        if &spec.id != id {
            return Err(Error::Contract(format!(
                "record {} expects library entry {s} to be {id}, found {}",
                record.index, spec.id
            )));
        }
        sources.push(spec.values.clone());
    }
    let refs: Vec<&[f64]> = sources.iter().map(|s| s.as_slice()).collect();
    let clean = mix_weighted(&refs, &record.weights)?;
    let noise = synthesize_noise(clean.len(), record.snr_db, &clean, record.noise_seed)?;
    let mixed = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
    Ok(MixtureSample {
        index: record.index,
        split: record.split,
        mixed,
        sources,
        weights: record.weights.clone(),
        snr_db: record.snr_db,
        noise_seed: record.noise_seed,
    })
}

/// Plans and realises a whole dataset sequentially.
pub fn generate_dataset(config: &DatasetConfig, library: &[Spectrum]) -> Result<(DatasetManifest, Vec<MixtureSample>)> {
    let manifest = plan_dataset(config, library)?;
    let samples = manifest
        .records
        .iter()
        .map(|r| realize_sample(r, library))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Warning text when more samples are requested than there are distinct
/// unordered source sets, so combinations must repeat.
pub fn pair_diversity_warning(library_len: usize, components: usize, total: usize) -> Option<String> {
    if library_len < components {
        return Some(format!("library of {library_len} spectra cannot supply {components} distinct sources"));
    }
    let mut combos: u128 = 1;
    for i in 0..components as u128 {
        combos = combos * (library_len as u128 - i) / (i + 1);
    }
    (total as u128 > combos).then(|| {
        format!("{total} samples requested but only {combos} distinct source combinations exist; combinations will repeat with fresh weights and noise")
    })
}
