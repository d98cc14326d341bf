use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_score-lab");
const QUICK: [&str; 10] = [
    "--train.steps",
    "20",
    "--train.record_every",
    "2",
    "--train.eval_points",
    "41",
    "--train.batch={\"mode\":\"full_quadrature\",\"points\":41}",
    "--model.hidden",
    "8",
    "--demo.curve_points=41",
];

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .env("SCORE_LAB_OUT", out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bad_config_file_exits_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        "{\n  \"ball\": {\n    \"epsilon\": 1.0,\n    \"radius\": 2\n  }\n}\n",
    )
    .unwrap();
    let o = run(
        &["demo", "fig1", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("ball") && err.contains("radius") && err.contains("line 4"),
        "{err}"
    );

    std::fs::write(&cfg, "{ \"train\": { \"lr\": 0 } }").unwrap();
    let o = run(
        &["demo", "fig1", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.lr"), "{}", stderr(&o));

    let o = run(
        &["demo", "fig1", "--config", "/nonexistent/x.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_names_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["demo", "fig7"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["verify", "thm9"], dir.path()).status.code(), Some(2));
    assert_eq!(
        run(&["verify", "thm1", "--trials", "0"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn demo_writes_to_the_environment_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["demo", "overfit_l2"];
    args.extend(QUICK);
    let o = run(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "overfit_l2_trajectory.csv",
        "overfit_l2.svg",
        "overfit_l2_summary.jsonl",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("overfit_l2_trajectory.csv")).unwrap();
    assert!(csv.starts_with(
        "step,train_loss,r_madry,r_score,c_const,std01,madry01,score01,thm1_lo_resid,thm1_hi_resid\n"
    ));
    assert_eq!(csv.lines().count(), 12);
    let svg = std::fs::read_to_string(dir.path().join("overfit_l2.svg")).unwrap();
    let comment = &svg[svg.find("<!--").unwrap() + 4..svg.find("-->").unwrap()];
    assert!(!comment.contains("--"));
    assert!(comment.contains("\"steps\": 20"));
}

#[test]
fn out_flag_and_format_selection() {
    let env_dir = tempfile::tempdir().unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "demo",
        "fig2",
        "--out",
        out_dir.path().to_str().unwrap(),
        "--outputs.formats=[\"csv\"]",
    ];
    args.extend(QUICK);
    let o = run(&args, env_dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(std::fs::read_dir(env_dir.path()).unwrap().next().is_none());
    let names: Vec<String> = std::fs::read_dir(out_dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().all(|n| n.ends_with(".csv")), "{names:?}");
    assert!(names.contains(&"fig2_curves.csv".to_string()));
}

#[test]
fn verify_reports_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "thm1", "--trials", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with("2/2"), "{}", stdout(&o));
    let text = std::fs::read_to_string(dir.path().join("verify_thm1.jsonl")).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in [
            "name",
            "lhs",
            "rhs",
            "residual",
            "tolerance",
            "pass",
            "seed",
        ] {
            assert!(v.get(key).is_some(), "{key} missing in {line}");
        }
    }

    let o = run(
        &[
            "verify",
            "thm1",
            "--trials",
            "50",
            "--inject-fault",
            "halve-c",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    let fail = out
        .lines()
        .find(|l| l.starts_with("FAIL "))
        .expect("first failure echoed");
    assert!(fail.contains("\"name\":\"thm1.lower"), "{fail}");
}

#[test]
fn sweep_rows_are_sorted_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "sweep",
        "--train.steps",
        "5",
        "--train.eval_points",
        "21",
        "--train.batch={\"mode\":\"full_quadrature\",\"points\":21}",
        "--sweep.lrs=[0.05,0.1]",
        "--seed",
        "4",
    ];
    assert_eq!(run(&args, a.path()).status.code(), Some(0));
    assert_eq!(run(&args, b.path()).status.code(), Some(0));
    let ta = std::fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    assert_eq!(
        ta,
        std::fs::read_to_string(b.path().join("sweep.csv")).unwrap()
    );
    let rows: Vec<&str> = ta.lines().collect();
    assert_eq!(rows[0], "loss,lr,clean01,robust01");
    assert_eq!(rows.len(), 17);
    assert!(rows[1].starts_with("JSdist,0.05,"));
}
