//! End-to-end checks of the command-line surface: exit codes, config-file
//! strictness, and the CSV artifacts with their provenance headers.

use std::path::PathBuf;

use proxrestart::cli::run_cli;

fn tmp(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("proxrestart-cli-{}-{name}", std::process::id()));
    path
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["proxrestart"];
    full.extend_from_slice(args);
    run_cli(full)
}

#[test]
fn solve_on_synthetic_data_writes_a_trace_with_provenance() {
    let trace = tmp("solve-trace.csv");
    let code = cli(&[
        "solve",
        "--synth",
        "8,14,0.6,3,7",
        "--solver",
        "fista",
        "--restart",
        "combo",
        "--mu",
        "0.05",
        "--budget",
        "50",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("# problem = lasso"));
    assert!(text.contains("# solver = fista"));
    assert!(text.contains("# restart = combination"));
    assert!(text.contains("# seed = 0"));
    assert!(text.contains("iter,epoch,F,gap,dist_v,restart"));
    // 1 initial row + 50 iterations
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 52);
    std::fs::remove_file(&trace).ok();
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let config = tmp("bad-key.conf");
    std::fs::write(&config, "solver = fista\nfrobnicate = 7\n").unwrap();
    let code = cli(&[
        "solve",
        "--synth",
        "6,10,0.6,2,3",
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    std::fs::remove_file(&config).ok();
}

#[test]
fn flags_override_config_values() {
    let config = tmp("override.conf");
    std::fs::write(
        &config,
        "solver = ista\nbudget = 5\nsynth = 6,10,0.6,2,3\n",
    )
    .unwrap();
    let trace = tmp("override-trace.csv");
    let code = cli(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--budget",
        "9",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.contains("# solver = ista"));
    assert!(text.contains("# budget = 9"));
    std::fs::remove_file(&config).ok();
    std::fs::remove_file(&trace).ok();
}

#[test]
fn invalid_solver_and_policy_combinations_exit_with_config_errors() {
    assert_eq!(
        cli(&["solve", "--synth", "6,10,0.6,2,3", "--solver", "warp"]),
        2
    );
    // the baseline has no momentum to restart
    assert_eq!(
        cli(&[
            "solve",
            "--synth",
            "6,10,0.6,2,3",
            "--solver",
            "ista",
            "--restart",
            "fval"
        ]),
        2
    );
    // a gap stop without a reference cannot run
    assert_eq!(
        cli(&[
            "solve",
            "--synth",
            "6,10,0.6,2,3",
            "--gap-tol",
            "1e-8"
        ]),
        2
    );
    // combo restart with neither mu nor explicit parameters
    assert_eq!(
        cli(&["solve", "--synth", "6,10,0.6,2,3", "--restart", "combo"]),
        2
    );
}

#[test]
fn rates_emits_the_documented_columns() {
    let out = tmp("rates.csv");
    let code = cli(&[
        "rates",
        "--mu-grid",
        "1e-6:1e-1:7",
        "--mu-f",
        "1e-5",
        "--theta0",
        "0.1",
        "--ratio",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# theta0 = 0.1"));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "mu,mu_f,K,sigma,rate_restart,rate_simplified,rate_cd"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 7);
        let restart: f64 = fields[4].parse().unwrap();
        let simplified: f64 = fields[5].parse().unwrap();
        assert!(restart > 0.0 && restart < 1.0);
        assert!(simplified > 0.0 && simplified < 1.0);
    }
    std::fs::remove_file(&out).ok();

    // a single point works without grids
    assert_eq!(cli(&["rates", "--mu", "1e-3", "--mu-f", "1e-4"]), 0);
    // empty or malformed grids are config errors
    assert_eq!(cli(&["rates", "--mu-grid", "1e-3:1e-2:1", "--mu-f", "1e-4"]), 2);
}

#[test]
fn sweep_averages_seeds_and_keeps_input_order() {
    let out = tmp("sweep.csv");
    let code = cli(&[
        "sweep",
        "--synth",
        "8,14,0.6,3,7",
        "--l2",
        "0.1",
        "--solver",
        "fista",
        "--restart",
        "combo",
        "--axis",
        "mu",
        "--values",
        "0.5,0.05,0.005",
        "--seeds",
        "2",
        "--budget",
        "60",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# axis = mu"));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "value,iterations_mean,iterations_std,gap_mean,gap_std"
    );
    let values: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values, vec![0.5, 0.05, 0.005]);
    std::fs::remove_file(&out).ok();

    // a single seed drops the deviation columns
    let out1 = tmp("sweep-one.csv");
    let code = cli(&[
        "sweep",
        "--synth",
        "8,14,0.6,3,7",
        "--solver",
        "ista",
        "--axis",
        "seed",
        "--values",
        "1,2",
        "--budget",
        "20",
        "--out",
        out1.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out1).unwrap();
    assert!(text.contains("value,iterations,gap"));
    std::fs::remove_file(&out1).ok();

    // an empty value list is rejected
    assert_eq!(
        cli(&[
            "sweep",
            "--synth",
            "8,14,0.6,3,7",
            "--axis",
            "mu",
            "--values",
            ""
        ]),
        2
    );
}

#[test]
fn make_reference_then_solve_with_gap_stop() {
    let reference = tmp("reference.txt");
    let code = cli(&[
        "make-reference",
        "--synth",
        "8,14,0.6,3,11",
        "--l2",
        "0.05",
        "--budget",
        "200000",
        "--out",
        reference.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&reference).unwrap();
    assert!(text.contains("# f_star = "));
    assert!(text.contains("# producer = make-reference"));

    let trace = tmp("gap-trace.csv");
    let code = cli(&[
        "solve",
        "--synth",
        "8,14,0.6,3,11",
        "--l2",
        "0.05",
        "--reference",
        reference.to_str().unwrap(),
        "--solver",
        "fista",
        "--restart",
        "fval",
        "--budget",
        "5000",
        "--gap-tol",
        "1e-9",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    let last = text.lines().last().unwrap();
    let fields: Vec<&str> = last.split(',').collect();
    let gap: f64 = fields[3].parse().expect("gap column populated");
    assert!((-1e-10..=1e-9).contains(&gap), "gap={gap}");

    // a reference of the wrong dimension is rejected
    let code = cli(&[
        "solve",
        "--synth",
        "9,14,0.6,3,11",
        "--reference",
        reference.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);

    std::fs::remove_file(&reference).ok();
    std::fs::remove_file(&trace).ok();
}
