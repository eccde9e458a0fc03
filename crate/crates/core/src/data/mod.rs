//! Spectrum ingestion, mixing and seeded dataset synthesis.
//!
//! Pure spectra are max-normalised to a peak of exactly 1. A sample mixes
//! `C` distinct library entries with random weights and adds equal-power
//! white and brown noise at an SNR drawn per sample. Every random draw comes
//! from a stream seeded by [`derive_seed`](crate::derive_seed)`(master, index, tag)`,
//! so any sample can be rebuilt from its manifest record alone.

mod dataset;
mod mixing;
mod spectrum;
mod synth;

pub use dataset::{
    generate_dataset, pair_diversity_warning, plan_dataset, realize_sample, DatasetConfig, DatasetManifest,
    MixtureSample, SampleRecord, Split, SplitSizes, MANIFEST_VERSION,
};
pub use mixing::{
    mean_power, measured_snr_db, mix_spectra, mix_weighted, noise_components, synthesize_noise, NoiseComponents,
    MIN_ALPHA,
};
pub use spectrum::{max_normalize, parse_intensities, parse_spectrum, standardize_length, Spectrum};
pub use synth::{synth_id, synth_library, SynthLibraryConfig};
