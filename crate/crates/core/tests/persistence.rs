//! Dataset and checkpoint files, and the command-line surface end to end.

use std::fs;
use std::path::Path;

use pde_surrogate::cli::run_command;
use pde_surrogate::io::{read_checkpoint, read_dataset, RunConfig};
use pde_surrogate::pde_data::{generate_dataset, DatasetSpec, InitialConditionSpec, PdeConfig, SpatialGrid};
use pde_surrogate::Error;

fn spec(n: usize, n_t: usize, seed: u64) -> DatasetSpec {
    DatasetSpec {
        pde: PdeConfig {
            n_t,
            t_end: 0.016 * n_t as f64,
            ..PdeConfig::advection()
        },
        grid: SpatialGrid::default(),
        initial: InitialConditionSpec::default(),
        n_samples: n,
        base_seed: seed,
    }
}

#[test]
fn full_size_dataset_has_the_documented_length_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.npdt"), dir.path().join("b.npdt"));
    let s = spec(512, 125, 0);
    generate_dataset(&s, &a).unwrap();
    generate_dataset(&s, &b).unwrap();
    let header = 4 + 2 + 1 + 1 + 4 + 4 + 8 + 8 + 125 * 8 + 512 * (8 + 8);
    let expected = header + 512 * 125 * 64 * 8 + 4;
    assert_eq!(fs::metadata(&a).unwrap().len(), expected as u64);
    assert!(fs::read(&a).unwrap() == fs::read(&b).unwrap());
    let contents = read_dataset(&a).unwrap();
    assert_eq!(contents.trajectories.len(), 512);
    assert!(contents.labels.is_none());
}

#[test]
fn corrupted_dataset_bytes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.npdt");
    generate_dataset(&spec(3, 8, 4), &path).unwrap();
    let clean = fs::read(&path).unwrap();
    for offset in [40, clean.len() / 2, clean.len() - 1] {
        let mut bytes = clean.clone();
        bytes[offset] ^= 0x10;
        fs::write(&path, &bytes).unwrap();
        assert!(read_dataset(&path).is_err(), "flip at {offset} accepted");
    }
    fs::write(&path, &clean[..clean.len() - 9]).unwrap();
    assert!(read_dataset(&path).is_err());
    let mut bad_magic = clean.clone();
    bad_magic[0] = b'X';
    fs::write(&path, &bad_magic).unwrap();
    assert!(matches!(read_dataset(&path), Err(Error::BadMagic { .. })));
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["pde-surrogate"];
    argv.extend_from_slice(args);
    run_command(argv)
}

fn small_config(dir: &Path) -> String {
    let mut c = RunConfig::default();
    c.pde.n_t = 16;
    c.pde.t_end = 0.016 * 16.0;
    c.n_samples = 12;
    c.n_val = 4;
    c.arch.width = 8;
    c.arch.depth = 1;
    c.arch.modes = 8;
    c.train.epochs = 2;
    c.train.batch_size = 4;
    c.eval_integrators = vec![pde_surrogate::integrators::IntegratorKind::Rk4];
    let path = dir.join("run.cfg");
    fs::write(&path, c.render()).unwrap();
    path.display().to_string()
}

#[test]
fn cli_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let out_s = out.display().to_string();
    assert_eq!(cli(&["generate", "--config", &cfg, "--out", &out_s]), 0);
    let dataset = out.join("dataset.npdt");
    let first = fs::read(&dataset).unwrap();
    assert_eq!(cli(&["generate", "--config", &cfg, "--out", &out_s]), 0);
    assert!(fs::read(&dataset).unwrap() == first, "regeneration changed the dataset");

    let ds = dataset.display().to_string();
    assert_eq!(cli(&["labels", "--config", &cfg, "--dataset", &ds, "--out", &out_s]), 0);
    assert!(read_dataset(&out.join("dataset_labeled.npdt")).unwrap().labels.is_some());
    for objective in ["state", "derivative"] {
        assert_eq!(
            cli(&["train", "--config", &cfg, "--dataset", &ds, "--objective", objective, "--out", &out_s]),
            0
        );
    }
    let state = out.join("model_state.npck").display().to_string();
    let derivative = out.join("model_derivative.npck").display().to_string();
    let ck_bytes = fs::read(&derivative).unwrap();
    assert_eq!(
        cli(&["eval", "--config", &cfg, "--dataset", &ds, "--checkpoint", &state, "--checkpoint", &derivative, "--out", &out_s]),
        0
    );
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2);
    assert!(metrics.lines().any(|l| l.contains("derivative") && l.contains("rk4")));

    assert_eq!(cli(&["rollout", "--config", &cfg, "--dataset", &ds, "--checkpoint", &derivative, "--out", &out_s]), 0);
    assert_eq!(fs::read_to_string(out.join("rollout.csv")).unwrap().lines().count(), 1 + 16 * 64);
    assert_eq!(cli(&["noise-probe", "--config", &cfg, "--dataset", &ds, "--out", &out_s]), 0);

    assert!(fs::read(&dataset).unwrap() == first, "a command mutated its input dataset");
    assert!(fs::read(&derivative).unwrap() == ck_bytes, "a command mutated its input checkpoint");
    let ck = read_checkpoint(Path::new(&derivative)).unwrap();
    assert_eq!(ck.log.epochs, 2);
}

#[test]
fn cli_failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_s = dir.path().display().to_string();
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["generate", "--no-such-flag"]), 2);
    let missing = dir.path().join("missing.cfg").display().to_string();
    assert_eq!(cli(&["generate", "--config", &missing, "--out", &out_s]), 1);
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "arch.colour = blue\n").unwrap();
    assert_eq!(cli(&["generate", "--config", &bad.display().to_string(), "--out", &out_s]), 1);
    let junk = dir.path().join("junk.npck");
    fs::write(&junk, b"NPCK\x01\x00garbage").unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(cli(&["generate", "--config", &cfg, "--out", &out_s]), 0);
    let ds = dir.path().join("dataset.npdt").display().to_string();
    assert_eq!(
        cli(&["eval", "--config", &cfg, "--dataset", &ds, "--checkpoint", &junk.display().to_string(), "--out", &out_s]),
        1
    );
    assert_eq!(cli(&["train", "--config", &cfg, "--dataset", &ds, "--objective", "both", "--out", &out_s]), 2);
}
