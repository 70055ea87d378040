use std::fs;
use std::path::Path;
use std::process::Command;

use clap::Parser;
use zipm_cli::coverage::{run_coverage_study, CoverageConfig, Estimator};
use zipm_cli::io::{ingest_counts, parse_json, read_csv, write_csv, Format, IoError};
use zipm_cli::report::{write_table, Report, SCHEMA_VERSION};
use zipm_cli::{run, Cli};
use zipm_core::em::EmOptions;
use zipm_core::simulate::SimConfig;
use zipm_core::{ExposureGrid, ModelParams, PriorSpec};

fn zipm(args: &[&str]) -> Vec<std::path::PathBuf> {
    let mut argv = vec!["zipm"];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv).unwrap()).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn one_cell_csv() {
    let t = read_csv("t,s1\n1.0,3".as_bytes()).unwrap();
    assert_eq!((t.grid.days(), t.grid.sites()), (1, 1));
    assert_eq!(t.n.get(0, 0), 3);
    assert_eq!(t.grid.t(), &[1.0]);
}

#[test]
fn csv_errors_name_their_location() {
    match read_csv("t,a,b\n1,2,3\n0.5,1\n".as_bytes()) {
        Err(IoError::RaggedRows { row, found, expected }) => assert_eq!((row, found, expected), (2, 1, 2)),
        other => panic!("{other:?}"),
    }
    match read_csv("t,a,b\n1,2,-3\n".as_bytes()) {
        Err(IoError::NegativeCount { value, at }) => {
            assert_eq!(value, -3);
            assert_eq!(at, "line 2, column 3");
        }
        other => panic!("{other:?}"),
    }
    match read_csv("t,a,b\n1,2,3\n1,x,3\n".as_bytes()) {
        Err(IoError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(read_csv("day,a\n1,2\n".as_bytes()), Err(IoError::Parse { line: 1, .. })));
    assert!(matches!(read_csv("t,a\n".as_bytes()), Err(IoError::Parse { .. })));
    assert!(matches!(read_csv("t,a\n0,1\n".as_bytes()), Err(IoError::Model(_))));
}

#[test]
fn json_errors() {
    assert!(matches!(parse_json(r#"{"t":[1],"n":[[1,-2]]}"#), Err(IoError::NegativeCount { value: -2, .. })));
    assert!(matches!(parse_json(r#"{"t":[1,2],"n":[[1,2],[3]]}"#), Err(IoError::RaggedRows { row: 2, .. })));
    match parse_json("{\"t\":[1],\n \"n\": [[1,]]}") {
        Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let t = parse_json(r#"{"schema_version":1,"t":[0.5,2],"n":[[0,1],[2,3]],"y":[true,false]}"#).unwrap();
    assert_eq!(t.n.site_totals(), vec![2, 4]);
    assert_eq!(t.y, Some(vec![true, false]));
}

#[test]
fn canonical_csv_round_trips_byte_for_byte() {
    let text = "t,north,s2,s3\n0.5,0,4,1\n1.0,12,0,0\n0.30000000000000004,7,7,2\n";
    let table = read_csv(text.as_bytes()).unwrap();
    let mut out = Vec::new();
    write_csv(&table, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);
}

#[test]
fn empty_table_has_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    write_table(&p, &["theta", "loglik"], &[]).unwrap();
    assert_eq!(fs::read_to_string(p).unwrap(), "theta,loglik\n");
}

#[test]
fn simulate_then_fit_every_regime() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let data = format!("{d}/data.json");
    zipm(&["simulate", "--t", "0.5,1,1.5", "--sites", "150", "--seed", "9", "--format", "json", "-o", &data]);
    let sim = json(Path::new(&data));
    assert_eq!(sim["schema_version"], SCHEMA_VERSION);
    assert_eq!(sim["command"], "simulate");

    for cmd in ["fit-mixture", "fit-zipm", "fit-eb", "fit-observed"] {
        let out = zipm(&[cmd, "-i", &data, "--out-dir", d]);
        let doc = json(&out[0]);
        assert_eq!(doc["schema_version"], SCHEMA_VERSION, "{cmd}");
        assert!(doc["config"]["common"]["level"] == 0.95, "{cmd}: effective config echoed");
    }
    let fit = json(&Path::new(d).join("fit-zipm.json"));
    let theta = fit["fit"]["theta"].as_f64().unwrap();
    assert!(theta > 1.5 && theta < 6.0, "{theta}");
    assert!(fit["interval"]["ok"]["lower"].as_f64().unwrap() < theta);
    assert_eq!(fit["loglik_trace"].as_array().unwrap().len(), fit["fit"]["iterations"].as_u64().unwrap() as usize + 1);
    let obs = json(&Path::new(d).join("fit-observed.json"));
    assert!(obs["lognormal"]["ok"]["upper"].as_f64().unwrap() > 0.0);

    let curve = zipm(&["loglik-curve", "-i", &data, "--points", "7", "--out-dir", d]);
    let text = fs::read_to_string(&curve[0]).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.starts_with("theta,loglik,std_error\n"));

    let chain = zipm(&["posterior-mcmc", "-i", &data, "--samples", "500", "--out-dir", d]);
    assert_eq!(fs::read_to_string(&chain[0]).unwrap().lines().count(), 401);
    assert_eq!(json(&chain[1])["draws"], 400);
}

#[test]
fn json_reports_reparse_to_the_same_structure() {
    let dir = tempfile::tempdir().unwrap();
    let out = zipm(&["ztp-compare", "--mu", "1", "--nu", "5", "--format", "json", "--out-dir", dir.path().to_str().unwrap()]);
    let text = fs::read_to_string(&out[0]).unwrap();
    let doc: Report<serde_json::Value> = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_value(&doc).unwrap();
    assert_eq!(again, serde_json::from_str::<serde_json::Value>(&text).unwrap());
    assert_eq!(doc.body["rows"].as_array().unwrap().len(), 10);
}

#[test]
fn seeded_commands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let run_sim = |name: &str, seed: &str| {
        let p = format!("{d}/{name}.csv");
        zipm(&["simulate", "--sites", "30", "--seed", seed, "-o", &p]);
        fs::read(p).unwrap()
    };
    assert_eq!(run_sim("a", "4"), run_sim("b", "4"));
    assert_ne!(run_sim("a", "4"), run_sim("c", "5"));

    let data = format!("{d}/a.csv");
    let chain = |name: &str| {
        let p = format!("{d}/{name}.csv");
        zipm(&["posterior-mcmc", "-i", &data, "--samples", "300", "--seed", "8", "-o", &p]);
        fs::read(p).unwrap()
    };
    assert_eq!(chain("c1"), chain("c2"));
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = format!("{d}/run.toml");
    fs::write(&cfg, "seed = 11\nlevel = 0.9\n[design]\nsites = 7\nt = [1.0, 2.0]\n[ztp]\nx_max = 4\n").unwrap();
    let p = format!("{d}/s.json");
    zipm(&["simulate", "--config", &cfg, "--sites", "5", "--format", "json", "-o", &p]);
    let doc = json(Path::new(&p));
    assert_eq!(doc["n"][0].as_array().unwrap().len(), 5);
    assert_eq!(doc["t"], serde_json::json!([1.0, 2.0]));
    assert_eq!(doc["config"]["common"]["seed"], 11);
    assert_eq!(doc["config"]["common"]["level"], 0.9);

    let out = zipm(&["ztp-compare", "--config", &cfg, "--out-dir", d]);
    assert_eq!(fs::read_to_string(&out[0]).unwrap().lines().count(), 5);

    fs::write(&cfg, "[design]\nsitez = 3\n").unwrap();
    let err = run(Cli::try_parse_from(["zipm", "simulate", "--config", &cfg]).unwrap()).unwrap_err();
    assert!(format!("{err:#}").contains("sitez"));
}

#[test]
fn binary_honours_output_directory_variable_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_zipm");
    let status = Command::new(bin)
        .args(["ztp-compare", "--mu", "2", "--nu", "3"])
        .env("ZIPM_OUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("ztp-compare.csv").exists());

    let missing = Command::new(bin)
        .args(["fit-zipm", "-i", "/nonexistent/counts.csv"])
        .env("ZIPM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("does not exist"));

    let help = Command::new(bin).args(["coverage-study", "--help"]).output().unwrap();
    let help = String::from_utf8(help.stdout).unwrap();
    for flag in ["--replicates", "--estimators", "--pi", "--eps", "--theta", "--seed", "--out-dir", "--config", "--alpha"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn ingest_from_disk_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, r#"{"t":[1.5],"n":[[4,0,2]]}"#).unwrap();
    let t = ingest_counts(&p, Format::from_path(&p)).unwrap();
    assert_eq!(t.n.total(), 6);
    assert!(matches!(ingest_counts(&dir.path().join("nope.csv"), Format::Csv), Err(IoError::File { .. })));
}

fn study(params: ModelParams, seed: u64) -> CoverageConfig {
    CoverageConfig {
        sim: SimConfig {
            grid: ExposureGrid::new(vec![0.5, 1.0, 1.5, 2.0], 60).unwrap(),
            params,
            seed,
            replicates: 100,
        },
        estimators: Estimator::ALL.to_vec(),
        level: 0.95,
        em: EmOptions::default(),
        prior: PriorSpec::default(),
    }
}

#[test]
fn coverage_study_is_deterministic() {
    let cfg = study(ModelParams::new(0.3, 0.8, 6.0, 2.0), 3);
    let a = run_coverage_study(&cfg).unwrap();
    let b = run_coverage_study(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.summaries.len(), 6);
    let mut short = cfg.clone();
    short.sim.replicates = 99;
    assert!(run_coverage_study(&short).is_err());
}

#[test]
fn degenerate_study_completes_and_counts_failures() {
    // Equal rates and an even split: there is no second component, so
    // the mixture fits chase noise.  The study must finish and account for
    // every replicate; how many fits fail is data-dependent (EM usually
    // finds a spurious interior split rather than a boundary).
    let rep = run_coverage_study(&study(ModelParams::new(0.5, 0.8, 2.0, 2.0), 4)).unwrap();
    for s in &rep.summaries {
        assert_eq!(s.replicates, 100);
        assert_eq!(s.failed_replicates.len(), s.not_converged + s.boundary_fit + s.other_failures);
        assert!(s.hits + s.failed_replicates.len() <= 100);
    }
    let by = |e: Estimator| rep.summaries.iter().find(|s| s.estimator == e).unwrap();
    // Empirical Bayes reuses the mixture fit, so it fails on the same
    // replicates.
    assert_eq!(by(Estimator::EmMixture).failed_replicates, by(Estimator::EbMixture).failed_replicates);
    assert_eq!(by(Estimator::EmZipm).failed_replicates, by(Estimator::EbZipm).failed_replicates);
}
