use std::fs;
use std::path::Path;

use rssnet::checkpoint::{self, config_hash, Checkpoint};
use rssnet::config::{RunConfig, DEFAULT_PRESET};
use rssnet::dataset::{self, Dataset};
use rssnet::library::{load_library, load_spectrum, write_library_dir, write_packed_library};
use rssnet::Error;
use rssnet_core::data::{synth_library, DatasetConfig, Split, SplitSizes, SynthLibraryConfig};
use rssnet_core::model::RssNetConfig;
use rssnet_core::train::{train_epoch, Sequential, TrainConfig, TrainState};
use serde_json::json;

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn spectrum_files_parse_and_normalise() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("quartz.txt");
    write(&p, "# wavenumber intensity\n# exported\n100.0, 0\n101.5, 5\n103.0, 10\n");
    let s = load_spectrum(&p).unwrap();
    assert_eq!(s.values, vec![0.0, 0.5, 1.0]);
    assert_eq!(s.id, "quartz");

    let rows: String = (0..1200).map(|i| format!("{} {}\n", 200.0 + i as f64, (i % 7) as f64 + 1.0)).collect();
    let p = dir.path().join("long.dat");
    write(&p, &rows);
    assert_eq!(load_spectrum(&p).unwrap().len(), 1200);

    let p = dir.path().join("neg.txt");
    write(&p, "-3\n2\n4\n");
    assert_eq!(load_spectrum(&p).unwrap().values, vec![0.0, 0.5, 1.0]);
}

#[test]
fn malformed_and_empty_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.txt");
    write(&p, "1 2\n3 x\n");
    let msg = load_spectrum(&p).unwrap_err().to_string();
    assert!(msg.contains("line 2"), "{msg}");
    let p = dir.path().join("empty.txt");
    write(&p, "# only a header\n");
    assert!(load_spectrum(&p).is_err());
}

#[test]
fn library_directory_reports_every_unreadable_file() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("a.txt"), "1\n2\n");
    write(&dir.path().join("b.txt"), "oops\n");
    write(&dir.path().join("c.csv"), "");
    write(&dir.path().join("notes.md"), "ignored");
    match load_library(dir.path(), None) {
        Err(e @ Error::Library(_)) => {
            let msg = e.to_string();
            assert!(msg.contains("b.txt") && msg.contains("c.csv") && !msg.contains("a.txt"), "{msg}");
            assert_eq!(e.exit_code(), 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn library_round_trips_through_text_and_packed_forms() {
    let lib = synth_library(&SynthLibraryConfig {
        families: 3,
        members: 2,
        length: 100,
        ..SynthLibraryConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_library_dir(&dir.path().join("text"), &lib).unwrap();
    let back = load_library(&dir.path().join("text"), None).unwrap();
    assert_eq!(back.len(), lib.len());
    for (a, b) in lib.iter().zip(&back) {
        assert_eq!((&a.id, &a.values), (&b.id, &b.values));
    }
    let packed = dir.path().join("lib.json");
    write_packed_library(&packed, &lib).unwrap();
    assert_eq!(load_library(&packed, None).unwrap(), lib);

    let resampled = load_library(&packed, Some(64)).unwrap();
    assert!(resampled.iter().all(|s| s.len() == 64 && s.values.iter().copied().fold(0.0, f64::max) == 1.0));
}

fn small_dataset(dir: &Path, seed: u64) -> Dataset {
    let lib = synth_library(&SynthLibraryConfig {
        families: 5,
        members: 2,
        length: 48,
        ..SynthLibraryConfig::default()
    })
    .unwrap();
    let cfg = DatasetConfig {
        name: "t".into(),
        sizes: SplitSizes { train: 12, val: 5, test: 4 },
        snr_db: [10.0, 20.0],
        master_seed: seed,
        components: 2,
        length: 48,
    };
    dataset::generate(dir, &cfg, &lib).unwrap();
    Dataset::open(dir).unwrap()
}

#[test]
fn dataset_directory_round_trip_and_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path(), 9);
    let (manifest, full) = rssnet_core::data::generate_dataset(
        &DatasetConfig {
            name: "t".into(),
            sizes: ds.manifest.sizes,
            snr_db: [10.0, 20.0],
            master_seed: 9,
            components: 2,
            length: 48,
        },
        &ds.library,
    )
    .unwrap();
    assert_eq!(manifest, ds.manifest);
    // manifest -> JSON -> manifest is the identity
    let text = serde_json::to_string(&ds.manifest).unwrap();
    assert_eq!(serde_json::from_str::<rssnet_core::data::DatasetManifest>(&text).unwrap(), ds.manifest);

    for split in Split::ALL {
        let stored = ds.samples(split).unwrap();
        let expected: Vec<_> = full.iter().filter(|s| s.split == split).map(dataset::at_storage_precision).collect();
        assert_eq!(stored, expected);
    }
    let v = ds.verify().unwrap();
    assert_eq!(v.checked, 21);
    assert!(v.mismatched.is_empty());
    assert!(v.max_snr_error_db < 0.05, "{v:?}");
}

#[test]
fn tampered_datasets_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path(), 2);
    let path = dir.path().join("val.bin");
    let mut bytes = fs::read(&path).unwrap();
    let at = bytes.len() - 3;
    bytes[at] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    assert_eq!(ds.verify().unwrap().mismatched, vec![16]);

    // a sample file written against another manifest
    let other = tempfile::tempdir().unwrap();
    small_dataset(other.path(), 3);
    fs::copy(other.path().join("test.bin"), dir.path().join("test.bin")).unwrap();
    match ds.samples(Split::Test) {
        Err(e @ Error::Mismatch { .. }) => assert_eq!(e.exit_code(), 4),
        other => panic!("{other:?}"),
    }
}

fn trained_state(model: &RssNetConfig, tc: &TrainConfig) -> TrainState {
    let dir = tempfile::tempdir().unwrap();
    let lib = synth_library(&SynthLibraryConfig {
        families: 4,
        members: 1,
        length: 32,
        ..SynthLibraryConfig::default()
    })
    .unwrap();
    let cfg = DatasetConfig {
        name: "t".into(),
        sizes: SplitSizes { train: 8, val: 0, test: 0 },
        snr_db: [10.0, 20.0],
        master_seed: 1,
        components: 2,
        length: 32,
    };
    dataset::generate(dir.path(), &cfg, &lib).unwrap();
    let samples = Dataset::open(dir.path()).unwrap().samples(Split::Train).unwrap();
    let mut state = TrainState::new(model, 4).unwrap();
    train_epoch(model, tc, &mut state, &samples, &Sequential).unwrap();
    state.best_epoch = Some(1);
    state.best_val_loss = Some(-0.123_456_789_012_345_6);
    state
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let model = RssNetConfig::tiny();
    let tc = TrainConfig {
        batch_size: 4,
        ..TrainConfig::default()
    };
    let state = trained_state(&model, &tc);
    let ck = Checkpoint::from_state(&model, &tc, &state);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.ckpt");
    checkpoint::save(&p, &ck).unwrap();
    let back = checkpoint::load(&p, Some(&model)).unwrap();
    assert_eq!(back, ck);
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let (tc2, st2) = back.into_state().unwrap();
    assert_eq!(tc2, tc);
    assert_eq!(st2.adam.step, 2);
    for (name, t) in state.params.iter() {
        assert_eq!(bits(t.data()), bits(st2.params.get(name).unwrap().data()));
        assert_eq!(bits(&state.adam.m[name]), bits(&st2.adam.m[name]));
        assert_eq!(bits(&state.adam.v[name]), bits(&st2.adam.v[name]));
    }
    assert_eq!(st2.best_val_loss.unwrap().to_bits(), state.best_val_loss.unwrap().to_bits());
    // encoding is a pure function of the contents
    assert_eq!(fs::read(&p).unwrap(), checkpoint::encode(&ck));
}

#[test]
fn corrupted_or_mismatched_checkpoints_are_refused() {
    let model = RssNetConfig::tiny();
    let ck = Checkpoint::params_only(&model, &TrainState::new(&model, 0).unwrap().params);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.ckpt");
    checkpoint::save(&p, &ck).unwrap();

    let mut other = model.clone();
    other.iter = 3;
    match checkpoint::load(&p, Some(&other)) {
        Err(e @ Error::Mismatch { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains(&config_hash(&model)) && msg.contains(&config_hash(&other)), "{msg}");
            assert_eq!(e.exit_code(), 4);
        }
        r => panic!("{r:?}"),
    }

    let mut bytes = fs::read(&p).unwrap();
    bytes[200] ^= 1;
    fs::write(&p, &bytes).unwrap();
    assert!(matches!(checkpoint::load(&p, None), Err(Error::Checksum { .. })));

    fs::write(&p, b"hello").unwrap();
    assert!(matches!(checkpoint::load(&p, None), Err(Error::Format { .. })));

    assert!(ck.into_state().is_err());
}

#[test]
fn config_layers_apply_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let none = RunConfig::resolve(None, &json!({})).unwrap();
    assert_eq!(none, RunConfig::defaults(DEFAULT_PRESET).unwrap());
    assert_eq!(none.model, RssNetConfig::reference());

    let toml_path = dir.path().join("run.toml");
    write(
        &toml_path,
        "seed = 11\npreset = \"desk\"\n[model]\ndwconv_path = \"p2\"\n[train]\nlr = 0.002\nepochs = 7\n[data]\nlength = 256\n",
    );
    let file = RunConfig::resolve(Some(&toml_path), &json!({})).unwrap();
    assert_eq!((file.seed, file.train.seed, file.train.lr, file.train.epochs), (11, 11, 0.002, 7));
    assert_eq!(file.model.n, RssNetConfig::desk().n);
    assert_eq!(file.model.dwconv_path, rssnet_core::model::DwConvPath::P2);
    assert_eq!(file.data.length, 256);
    assert_eq!(file.data.components, 2);

    let flags = json!({"seed": 3, "preset": "tiny", "train": {"epochs": 2}});
    let both = RunConfig::resolve(Some(&toml_path), &flags).unwrap();
    assert_eq!((both.seed, both.train.epochs, both.train.lr), (3, 2, 0.002));
    assert_eq!(both.model.n, RssNetConfig::tiny().n);
    // a snapshot resolves to itself
    let snap = dir.path().join("snap.json");
    rssnet::write_json(&snap, &both).unwrap();
    assert_eq!(RunConfig::resolve(Some(&snap), &json!({})).unwrap(), both);

    let bad = dir.path().join("bad.json");
    write(&bad, r#"{"train": {"learning_rate": 1}}"#);
    assert_eq!(RunConfig::resolve(Some(&bad), &json!({})).unwrap_err().exit_code(), 2);
    write(&bad, r#"{"train": {"lr": -1}}"#);
    assert_eq!(RunConfig::resolve(Some(&bad), &json!({})).unwrap_err().exit_code(), 2);
}
