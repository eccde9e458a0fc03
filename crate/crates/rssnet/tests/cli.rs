use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rssnet::dataset::Dataset;
use rssnet::library::{load_intensities, spectrum_text, write_library_dir};
use rssnet::report::read_report;
use rssnet_core::data::{synth_library, Spectrum, Split, SynthLibraryConfig};
use rssnet_core::metrics::score_sample;
use serde_json::Value;

fn rssnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rssnet"))
        .args(args)
        .env_remove("RSSNET_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rssnet(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> String {
    let out = rssnet(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn schema_errors(schema: &str, doc: &Value) -> Vec<String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(schema);
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    v.iter_errors(doc).map(|e| e.to_string()).collect()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Library of `families` synthetic spectra written as text files.
fn library(dir: &Path, families: usize) -> PathBuf {
    let lib = synth_library(&SynthLibraryConfig {
        families,
        members: 1,
        length: 64,
        ..SynthLibraryConfig::default()
    })
    .unwrap();
    let p = dir.join("lib");
    write_library_dir(&p, &lib).unwrap();
    p
}

fn tiny_dataset(root: &Path, seed: &str) -> PathBuf {
    let lib = library(root, 6);
    let data = root.join(format!("data{seed}"));
    ok(&["gen-data", "--library", s(&lib), "--sizes", "24,8,6", "--length", "32", "--seed", seed, "--out", s(&data), "-q"]);
    data
}

fn train(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--data", s(data), "--preset", "tiny", "--seed", "4", "--out", s(out), "-q"];
    args.extend_from_slice(extra);
    ok(&args);
}

fn log_records(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join("train_log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn gen_data_single_sample_uses_both_spectra() {
    let root = tempfile::tempdir().unwrap();
    let lib = root.path().join("two");
    fs::create_dir(&lib).unwrap();
    fs::write(lib.join("a.txt"), "# a\n0 1\n1 3\n2 2\n3 0\n").unwrap();
    fs::write(lib.join("b.txt"), "0 0\n1 1\n2 4\n3 1\n").unwrap();
    let out = root.path().join("d");
    let stdout = ok(&["gen-data", "--library", s(&lib), "--sizes", "1,0,0", "--length", "8", "--out", s(&out)]);
    assert!(stdout.contains("manifest.json") && stdout.contains("1 total"), "{stdout}");
    let m = json_file(&out.join("manifest.json"));
    let mut src: Vec<u64> = m["records"][0]["sources"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    src.sort();
    assert_eq!(src, vec![0, 1]);
}

#[test]
fn gen_data_is_byte_reproducible_and_schema_valid() {
    let root = tempfile::tempdir().unwrap();
    let a = tiny_dataset(root.path(), "7");
    let b = root.path().join("again");
    let lib = root.path().join("lib");
    ok(&["gen-data", "--library", s(&lib), "--sizes", "24,8,6", "--length", "32", "--seed", "7", "--out", s(&b), "-q"]);
    for f in ["manifest.json", "library.json", "train.bin", "val.bin", "test.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = json_file(&a.join("manifest.json"));
    assert_eq!(m["records"].as_array().unwrap().len(), 38);
    assert_eq!(schema_errors("manifest.schema.json", &m), Vec::<String>::new());
    let snap = json_file(&a.join("resolved_config.json"));
    assert_eq!(snap["command"], "gen-data");
    assert_eq!(snap["config"]["seed"], 7);
    assert!(Dataset::open(&a).unwrap().verify().unwrap().mismatched.is_empty());
}

#[test]
fn unreadable_library_lists_failures() {
    let root = tempfile::tempdir().unwrap();
    let lib = root.path().join("lib");
    fs::create_dir(&lib).unwrap();
    fs::write(lib.join("good.txt"), "1\n2\n").unwrap();
    fs::write(lib.join("broken.txt"), "1\nnan-ish\n").unwrap();
    let err = fails(&["gen-data", "--library", s(&lib), "--sizes", "1,0,0", "--out", s(&root.path().join("d"))], 2);
    assert!(err.contains("broken.txt") && err.contains("line 2"), "{err}");
    fails(&["gen-data", "--library", s(&root.path().join("missing")), "--out", s(&root.path().join("d"))], 2);
}

#[test]
fn one_epoch_gives_one_schema_valid_record() {
    let root = tempfile::tempdir().unwrap();
    let data = tiny_dataset(root.path(), "1");
    let out = root.path().join("run");
    train(&data, &out, &["--epochs", "1"]);
    let recs = log_records(&out);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["epoch"], 1);
    assert_eq!(schema_errors("epoch_log.schema.json", &recs[0]), Vec::<String>::new());
    assert!(out.join("best.ckpt").exists() && out.join("last.ckpt").exists());
}

#[test]
fn flags_override_config_file() {
    let root = tempfile::tempdir().unwrap();
    let data = tiny_dataset(root.path(), "1");
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, "preset = \"tiny\"\n[train]\nepochs = 3\nbatch_size = 4\n").unwrap();
    let out = root.path().join("run");
    ok(&["train", "--data", s(&data), "--config", s(&cfg), "--epochs", "2", "--out", s(&out), "-q"]);
    assert_eq!(log_records(&out).len(), 2);
    let snap = json_file(&out.join("resolved_config.json"));
    assert_eq!(snap["config"]["train"]["epochs"], 2);
    assert_eq!(snap["config"]["train"]["batch_size"], 4);
    assert_eq!(snap["config"]["model"]["N"], 8);
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let root = tempfile::tempdir().unwrap();
    let data = tiny_dataset(root.path(), "2");
    let whole = root.path().join("whole");
    let split = root.path().join("split");
    train(&data, &whole, &["--epochs", "3"]);
    train(&data, &split, &["--epochs", "2"]);
    train(&data, &split, &["--epochs", "3", "--resume"]);
    for f in ["last.ckpt", "best.ckpt"] {
        assert_eq!(fs::read(whole.join(f)).unwrap(), fs::read(split.join(f)).unwrap(), "{f}");
    }
    let strip = |mut v: Vec<Value>| {
        for r in &mut v {
            r.as_object_mut().unwrap().remove("wall_time_s");
        }
        v
    };
    assert_eq!(strip(log_records(&whole)), strip(log_records(&split)));

    // another seed would follow a different trajectory
    let err = fails(
        &["train", "--data", s(&data), "--preset", "tiny", "--seed", "5", "--epochs", "4", "--resume", "--out", s(&split)],
        4,
    );
    assert!(err.contains("\"seed\":4") && err.contains("\"seed\":5"), "{err}");
}

#[test]
fn non_finite_training_input_exits_with_provenance() {
    let root = tempfile::tempdir().unwrap();
    let data = tiny_dataset(root.path(), "3");
    let bin = data.join("train.bin");
    let mut bytes = fs::read(&bin).unwrap();
    // first value of the first record
    bytes[68..72].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&bin, bytes).unwrap();
    let err = fails(&["train", "--data", s(&data), "--preset", "tiny", "--epochs", "1", "--out", s(&root.path().join("r"))], 3);
    assert!(err.contains("train:0"), "{err}");
}

#[test]
fn model_and_dataset_shapes_must_agree() {
    let root = tempfile::tempdir().unwrap();
    let data = tiny_dataset(root.path(), "3");
    let err = fails(&["train", "--data", s(&data), "--preset", "desk", "--out", s(&root.path().join("r"))], 5);
    assert!(err.contains("32") && err.contains("256"), "{err}");
}

#[test]
fn eval_is_deterministic_and_checks_the_config_hash() {
    let root = tempfile::tempdir().unwrap();
    let data = tiny_dataset(root.path(), "4");
    let run = root.path().join("run");
    train(&data, &run, &["--epochs", "2"]);
    let ck = run.join("best.ckpt");
    let (e1, e2) = (root.path().join("e1"), root.path().join("e2"));
    ok(&["eval", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&e1)]);
    ok(&["eval", "--checkpoint", s(&ck), "--data", s(&data), "--preset", "tiny", "--out", s(&e2)]);
    for f in ["report.json", "samples.csv"] {
        assert_eq!(fs::read(e1.join(f)).unwrap(), fs::read(e2.join(f)).unwrap(), "{f}");
    }
    let report = json_file(&e1.join("report.json"));
    assert_eq!(schema_errors("report.schema.json", &report), Vec::<String>::new());
    assert_eq!(report["count"], 6);
    for key in ["si_snr", "si_snri", "sid", "sad", "rmse"] {
        for stat in ["mean", "median", "std"] {
            assert!(report["aggregates"][key][stat].is_number(), "{key}.{stat}");
        }
    }
    let csv = fs::read_to_string(e1.join("samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("id,permutation,si_snr,si_snri,sid,sad,rmse"));

    let err = fails(
        &["eval", "--checkpoint", s(&ck), "--data", s(&data), "--preset", "tiny", "--ablation", "iter=3", "--out", s(&e2)],
        4,
    );
    assert!(err.contains("model config hash"), "{err}");
}

#[test]
fn unmix_writes_one_file_per_source_and_round_trips_through_scoring() {
    let root = tempfile::tempdir().unwrap();
    let data = tiny_dataset(root.path(), "5");
    let run = root.path().join("run");
    train(&data, &run, &["--epochs", "1"]);
    let ck = run.join("best.ckpt");
    let ev = root.path().join("ev");
    ok(&["eval", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&ev), "-q"]);
    let report = read_report(&ev.join("report.json")).unwrap();

    let ds = Dataset::open(&data).unwrap();
    let sample = &ds.samples(Split::Test).unwrap()[0];
    let input = root.path().join("mixed.txt");
    fs::write(&input, spectrum_text(&[], &sample.mixed)).unwrap();
    let out = root.path().join("um");
    ok(&["unmix", "--checkpoint", s(&ck), "--input", s(&input), "--out", s(&out), "-q"]);
    let mut files: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert_eq!(files, ["provenance.json", "resolved_config.json", "source_1.txt", "source_2.txt"]);
    let prov = json_file(&out.join("provenance.json"));
    assert_eq!(prov["config_hash"], rssnet::checkpoint::config_hash(&rssnet_core::model::RssNetConfig::tiny()));
    assert_eq!(prov["checkpoint_sha256"], rssnet::sha256_hex(&fs::read(&ck).unwrap()));

    let est: Vec<Vec<f64>> = ["source_1.txt", "source_2.txt"].iter().map(|f| load_intensities(&out.join(f)).unwrap()).collect();
    let rescored = score_sample(sample.index, &est, &sample.sources, &sample.mixed).unwrap();
    let from_eval = report.samples.iter().find(|r| r.id == sample.index).unwrap();
    assert_eq!(rescored.permutation, from_eval.permutation);
    assert!((rescored.si_snr - from_eval.si_snr).abs() < 1e-3, "{} vs {}", rescored.si_snr, from_eval.si_snr);
}

#[test]
fn unmix_rejects_a_wrong_length() {
    let root = tempfile::tempdir().unwrap();
    let data = tiny_dataset(root.path(), "5");
    let run = root.path().join("run");
    train(&data, &run, &["--epochs", "1"]);
    let input = root.path().join("short.txt");
    fs::write(&input, spectrum_text(&[], &[0.5; 30])).unwrap();
    let err = fails(&["unmix", "--checkpoint", s(&run.join("best.ckpt")), "--input", s(&input), "--out", s(&root.path().join("u"))], 5);
    assert!(err.contains("30") && err.contains("32"), "{err}");
}

/// Spectra with one narrow band each at well-separated positions: almost
/// orthogonal atoms.
fn separated_library(dir: &Path) -> PathBuf {
    let spectra: Vec<Spectrum> = (0..6)
        .map(|k| {
            let c = 5.0 + 10.0 * k as f64;
            let v = (0..64).map(|i| 1.0 / (1.0 + ((i as f64 - c) / 1.0).powi(2))).collect();
            Spectrum::new(format!("band{k}"), "test", v).unwrap().normalized().unwrap()
        })
        .collect();
    let p = dir.join("sep");
    write_library_dir(&p, &spectra).unwrap();
    p
}

#[test]
fn baselines_recover_supports_on_an_easy_split() {
    let root = tempfile::tempdir().unwrap();
    let lib = separated_library(root.path());
    let data = root.path().join("easy");
    ok(&["gen-data", "--library", s(&lib), "--sizes", "0,0,10", "--snr", "79,79.9", "--length", "64", "--out", s(&data), "-q"]);
    for method in ["nnomp", "sunsal"] {
        let out = root.path().join(method);
        ok(&["baseline", "--method", method, "--dictionary", s(&lib), "--data", s(&data), "--out", s(&out), "-q"]);
        let report = json_file(&out.join("report.json"));
        assert_eq!(report["support_error_rate"], 0.0, "{method}");
        assert_eq!(report["method"], method);
        assert_eq!(schema_errors("report.schema.json", &report), Vec::<String>::new());
    }
}

#[test]
fn baseline_flag_conflicts_and_missing_atoms_are_input_errors() {
    let root = tempfile::tempdir().unwrap();
    let lib = separated_library(root.path());
    let data = root.path().join("easy");
    ok(&["gen-data", "--library", s(&lib), "--sizes", "0,0,2", "--length", "64", "--out", s(&data), "-q"]);
    let out = s(&root.path().join("b")).to_string();
    let common = ["baseline", "--dictionary", s(&lib), "--data", s(&data), "--out", &out];
    let err = fails(&[&common[..], &["--method", "nnomp", "--lambda", "0.1"]].concat(), 2);
    assert!(err.contains("--lambda"), "{err}");
    fails(&[&common[..], &["--method", "sunsal", "--max-atoms", "3"]].concat(), 2);
    fails(&[&common[..], &["--method", "sunsal", "--tol", "-1"]].concat(), 2);

    let other = library(root.path(), 3);
    let err = fails(&["baseline", "--method", "nnomp", "--dictionary", s(&other), "--data", s(&data), "--out", &out], 2);
    assert!(err.contains("lacks"), "{err}");
}
