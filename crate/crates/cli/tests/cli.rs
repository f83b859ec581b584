use std::path::{Path, PathBuf};
use std::process::Command;

use mvhom_cli::config::{Command as Cmd, PlotKind};
use mvhom_cli::output::sha256_hex;
use mvhom_cli::{export_plotdata, run, Cli, OutputError, EXIT_ERROR};

const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");

fn cli(command: &str, config: &Path, out: &Path) -> Cli {
    Cli {
        command: command.into(),
        config: config.to_path_buf(),
        out: Some(out.to_path_buf()),
        seed: None,
        threads: None,
    }
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

const TFHOM_1D: &str = "seed = 9
[manifold]
kind = circle
[integrand]
family = weighted
space_dim = 1
a = sine:2,1,0
[tfhom]
point = 0, 1
slope = -1; 0
n = 64
schedule = 1, 2, 4
[output]
plots = trace
";

#[test]
fn tfhom_writes_a_doubling_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TFHOM_1D);
    let out = dir.path().join("out");
    let o = run(&cli("tfhom", &cfg, &out)).unwrap();
    assert_eq!(o.exit_code(), 0);
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let ts: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ts, vec![1.0, 2.0, 4.0]);
    for l in csv.lines().skip(1) {
        let v: f64 = l.split(',').nth(2).unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }
    let plot = std::fs::read_to_string(out.join("plot_trace.dat")).unwrap();
    assert!(plot.starts_with("# t value\n"));
    assert_eq!(plot.lines().count(), 4);
}

#[test]
fn manifest_lists_every_output_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TFHOM_1D);
    let out = dir.path().join("out");
    let o = run(&cli("tfhom", &cfg, &out)).unwrap();
    let mut listed: Vec<String> = o.manifest.files.iter().map(|f| f.path.clone()).collect();
    for f in &o.manifest.files {
        let bytes = std::fs::read(out.join(&f.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), f.sha256);
    }
    let mut present: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    listed.sort();
    present.sort();
    assert_eq!(listed, present);
    assert_eq!(o.manifest.config_sha256, sha256_hex(TFHOM_1D.as_bytes()));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["command"], "tfhom");
}

#[test]
fn certify_passes_for_the_isotropic_norm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run(&cli("certify", &Path::new(CONFIGS).join("certify_isotropic.cfg"), &out)).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("results.json")).unwrap()).unwrap();
    let r = &json["report"];
    for k in ["periodic_pass", "growth_pass", "lipschitz_pass", "recession_pass"] {
        assert_eq!(r[k], true, "{k}");
    }
}

#[test]
fn missing_seed_and_bad_values_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &TFHOM_1D.replace("seed = 9\n", ""));
    match run(&cli("tfhom", &cfg, &out)) {
        Err(mvhom_cli::CliError::Config(e)) => assert_eq!(e.key, "seed"),
        other => panic!("{other:?}"),
    }
    let cfg = write_config(dir.path(), &TFHOM_1D.replace("n = 64", "n = many"));
    match run(&cli("tfhom", &cfg, &out)) {
        Err(mvhom_cli::CliError::Config(e)) => assert_eq!((e.key.as_str(), e.line), ("tfhom.n", 11)),
        other => panic!("{other:?}"),
    }
    let cfg = write_config(dir.path(), &format!("{TFHOM_1D}[tfhom]\n"));
    assert!(run(&cli("tfhom", &cfg, &out)).is_ok());
    let cfg = write_config(dir.path(), &TFHOM_1D.replace("schedule = 1, 2, 4", "schedule = 1, 2, 4\ncolour = red"));
    match run(&cli("tfhom", &cfg, &out)) {
        Err(mvhom_cli::CliError::Config(e)) => assert_eq!(e.key, "tfhom.colour"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[manifold]\nkind = torus\n");
    let st = Command::new(env!("CARGO_BIN_EXE_mvhom"))
        .args(["tfhom", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(EXIT_ERROR));
    assert!(String::from_utf8_lossy(&st.stderr).contains("manifold.kind"));

    let cfg = write_config(dir.path(), &TFHOM_1D.replace("schedule = 1, 2, 4", "schedule = 1, 2\n[optim]\nmax_iter = 2"));
    let st = Command::new(env!("CARGO_BIN_EXE_mvhom"))
        .args(["tfhom", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o2"))
        .env("MVHOM_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(dir.path().join("o2/results.csv").exists());
}

#[test]
fn plot_kinds_must_match_the_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&cli("fhom-eval", &Path::new(CONFIGS).join("fhom_staircase.cfg"), &out)).unwrap();
    assert!(matches!(
        export_plotdata(&o.results, PlotKind::Trace),
        Err(OutputError::KindMismatch { kind: "trace", command: "fhom-eval" })
    ));
    let cfg = write_config(dir.path(), &format!("{}\n[output]\nplots = field-1d\n", TFHOM_1D.split("[output]").next().unwrap()));
    match run(&cli("tfhom", &cfg, &out)) {
        Err(mvhom_cli::CliError::Output(OutputError::KindMismatch { .. })) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn gamma_sweep_field_dump_has_three_columns_on_the_circle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run(&cli("gamma-sweep", &Path::new(CONFIGS).join("gamma_weighted_1d.cfg"), &out)).unwrap();
    let data = std::fs::read_to_string(out.join("plot_field-1d.dat")).unwrap();
    let mut lines = data.lines();
    assert_eq!(lines.next(), Some("# x u1 u2"));
    assert_eq!(lines.count(), 1025);
    assert!(data.lines().skip(1).all(|l| l.split(' ').count() == 3));
}

#[test]
fn command_must_match_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    match run(&cli("theta", &Path::new(CONFIGS).join("tfhom_weighted_1d.cfg"), &out)) {
        Err(mvhom_cli::CliError::Config(e)) => assert_eq!(e.key, "command"),
        other => panic!("{other:?}"),
    }
    assert!(Cmd::parse("gamma-sweep").is_some() && Cmd::parse("sweep").is_none());
}
