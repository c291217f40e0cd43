use std::path::Path;
use std::process::{Command, Output};

fn mtsae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtsae"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_fit_poststratify_metrics_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop");
    let small = [
        "--synth.n_pop",
        "600",
        "--synth.rows",
        "2",
        "--synth.cols",
        "2",
    ];
    ok(mtsae(&[&["synth", "--out", s(&pop)][..], &small].concat()));
    for f in ["population.csv", "adjacency.txt", "cells.csv", "truths.csv"] {
        assert!(pop.join(f).exists(), "{f}");
    }

    let population = pop.join("population.csv");
    let adjacency = pop.join("adjacency.txt");
    let fit = dir.path().join("fit");
    ok(mtsae(&[
        "fit",
        "--out",
        s(&fit),
        "--paths.population",
        s(&population),
        "--paths.adjacency",
        s(&adjacency),
        "--mcmc.n_iter=120",
        "--mcmc.n_burn=60",
        "--seed",
        "5",
    ]));
    let chain = fit.join("chain_multitype.csv");
    assert!(chain.exists());

    let post = dir.path().join("post");
    let cells = pop.join("cells.csv");
    ok(mtsae(&[
        "poststratify",
        "--out",
        s(&post),
        "--paths.chain",
        s(&chain),
        "--paths.cells",
        s(&cells),
        "--paths.adjacency",
        s(&adjacency),
    ]));
    let gauss = post.join("estimates_gaussian.csv");
    let bern = post.join("estimates_bernoulli.csv");
    let text = std::fs::read_to_string(&bern).unwrap();
    assert!(text.starts_with("area_id,estimand,mean,variance,lower,upper"));
    assert_eq!(text.lines().count(), 1 + 4);

    let scored = dir.path().join("scored");
    let report = ok(mtsae(&[
        "metrics",
        "--out",
        s(&scored),
        "--paths.adjacency",
        s(&adjacency),
        "--estimates",
        s(&gauss),
        s(&bern),
        "--truths",
        s(&pop.join("truths.csv")),
    ]));
    assert!(report.starts_with("method,response,mse"));
    assert!(report.contains("multitype,gaussian,"));
    assert!(report.contains("multitype,bernoulli,"));
    assert!(scored.join("report.csv").exists());
}

#[test]
fn simulate_writes_report_and_area_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let report = ok(mtsae(&[
        "simulate",
        "--out",
        s(&out),
        "--methods",
        "ht,multitype",
        "--replicates",
        "2",
        "--threads",
        "1",
        "--design.n=60",
        "--mcmc.n_iter=40",
        "--mcmc.n_burn=20",
        "--synth.n_pop=300",
        "--synth.rows=2",
        "--synth.cols=2",
    ]));
    assert_eq!(report.lines().count(), 1 + 4);
    assert_eq!(
        std::fs::read_to_string(out.join("report.csv")).unwrap(),
        report
    );
    for f in [
        "areas_ht_gaussian.csv",
        "areas_ht_bernoulli.csv",
        "areas_multitype_gaussian.csv",
        "areas_multitype_bernoulli.csv",
        "config.toml",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    // the written config reproduces the run
    let again = dir.path().join("again");
    let cfg = out.join("config.toml");
    let second = ok(mtsae(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&again),
    ]));
    assert_eq!(second, report);
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let out = mtsae(&["simulate", "--no.such_key", "1"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));

    let out = mtsae(&["fit", "--paths.adjacency", "/nonexistent/adjacency.txt"]);
    assert!(!out.status.success());
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
}
