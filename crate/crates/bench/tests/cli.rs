use std::path::Path;
use std::process::{Command, Output};

use tensor_iht::DenseTensor;
use tensor_iht_bench::tnsr::{load_tensor, save_tensor};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiht-bench")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_RUN: &str = r#"
kind = "phase_transition"
dims = [5, 5, 5]
rank = { hosvd = [1, 1, 1] }
ensemble = "facesplit"
m_values = [60, 90]
trials = 2
seed = 9
traces = true

[recovery]
max_iters = 30

[[algorithms]]
algo = "tiht"

[[algorithms]]
algo = "trim_tiht"
m_trim = [3]

[[algorithms]]
algo = "kacz_tiht"
"#;

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let mut results = Vec::new();
    for (dir, threads) in [("a", "1"), ("b", "2")] {
        let out = tmp.path().join(dir);
        let o = bench(&["run", path(&cfg), "--out", path(&out), "--threads", threads, "--no-timing", "--quiet"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["config.toml", "results.csv", "fractions.csv", "traces/tiht_m60_trim0_trial0.csv"] {
            assert!(out.join(f).is_file(), "missing {f}");
        }
        results.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(results[0], results[1]);
    let header = String::from_utf8_lossy(&results[0]).lines().next().unwrap().to_string();
    assert_eq!(header, "algo,m,m_trim,trial,recovered,final_rel_err,iters,seconds");
}

#[test]
fn seed_override_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(bench(&["run", path(&cfg), "--out", path(&a), "--no-timing", "--quiet"]).status.success());
    assert!(bench(&["run", path(&cfg), "--out", path(&b), "--no-timing", "--quiet", "--seed", "10"]).status.success());
    assert_ne!(std::fs::read(a.join("results.csv")).unwrap(), std::fs::read(b.join("results.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        ("unknown_key.toml", SMALL_RUN.replace("seed = 9", "seed = 9\nbogus = 1")),
        ("empty_grid.toml", SMALL_RUN.replace("m_values = [60, 90]", "m_values = []")),
        ("m_too_large.toml", SMALL_RUN.replace("m_values = [60, 90]", "m_values = [126]")),
        ("not_toml.toml", "kind = ".to_string()),
    ];
    for (name, body) in cases {
        let cfg = tmp.path().join(name);
        std::fs::write(&cfg, body).unwrap();
        let o = bench(&["run", path(&cfg), "--out", path(&out), "--quiet"]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let o = bench(&["survey", path(&cfg), "--out", path(&out), "--quiet"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bench(&["run", path(&cfg), "--quiet"]);
    assert_eq!(o.status.code(), Some(2), "missing output directory");
}

#[test]
fn io_errors_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bench(&["run", path(&tmp.path().join("absent.toml")), "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));

    let bad = tmp.path().join("bad.tnsr");
    std::fs::write(&bad, b"TNSR\x01\x00").unwrap();
    let o = bench(&["convert", path(&bad), path(&tmp.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(3));

    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, b"").unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let o = bench(&["run", path(&cfg), "--out", path(&blocker.join("sub")), "--quiet"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn convert_round_trips_through_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let t = DenseTensor::from_fn(&[3, 2, 4], |i| (i[0] as f64 - 1.5) / 7.0 + (i[1] * 4 + i[2]) as f64 * 1e-3);
    let src = tmp.path().join("t.tnsr");
    let csv = tmp.path().join("t.csv");
    let back = tmp.path().join("back.tnsr");
    save_tensor(&src, &t).unwrap();
    assert!(bench(&["convert", path(&src), path(&csv)]).status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("i0,i1,i2,value\n"));
    assert_eq!(text.lines().count(), 25);
    assert!(bench(&["convert", path(&csv), path(&back)]).status.success());
    assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&back).unwrap());
    assert_eq!(load_tensor(&back).unwrap().data(), t.data());
}

#[test]
fn survey_and_witness_subcommands_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let survey = tmp.path().join("survey.toml");
    std::fs::write(
        &survey,
        "kind = \"distortion_survey\"\ndims = [4, 4, 4]\nrank = { cp = 1 }\nensemble = \"facesplit\"\n\
         m_values = [30]\ntrials = 2\nseed = 1\nsamples = 10\nsurvey_m_trim = [0, 2]\n",
    )
    .unwrap();
    let out = tmp.path().join("s");
    let o = bench(&["survey", path(&survey), "--out", path(&out), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("survey.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);

    let witness = tmp.path().join("witness.toml");
    std::fs::write(
        &witness,
        "kind = \"witness_scan\"\ndims = [5, 5, 5]\nrank = { cp = 1 }\nensemble = \"facesplit\"\n\
         m_values = [200]\nn_values = [3, 5]\ntrials = 3\nseed = 1\n",
    )
    .unwrap();
    let out = tmp.path().join("w");
    let o = bench(&["witness", path(&witness), "--out", path(&out), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("witness.csv")).unwrap();
    assert!(text.starts_with("n,m,trial,row,x_distortion,y_distortion,ratio\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        tensor_iht_bench::ExperimentSpec::from_path(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 6);
}
