use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn plap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plap"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PLAP_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn bound_prints_t0() {
    let dir = tempfile::tempdir().unwrap();
    let out = plap(
        &[
            "bound",
            "--d",
            "2",
            "--p",
            "1.25",
            "--C",
            "1",
            "--f0-norm",
            "1",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let v = json(&out);
    // m = 1.2, Cbar = 0.24 (0.75/0.45)^1.25, T0 = 2/(1.25 Cbar)
    let cbar = 0.24 * (0.75f64 / 0.45).powf(1.25);
    let t0 = 2.0 / (1.25 * cbar);
    assert!((v["T0"].as_f64().unwrap() - t0).abs() < 1e-12 * t0);
    let bad = plap(
        &[
            "bound",
            "--d",
            "2",
            "--p",
            "1.9",
            "--C",
            "1",
            "--f0-norm",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn iso_on_two_by_two_halo_box() {
    let dir = tempfile::tempdir().unwrap();
    let out = plap(
        &["iso", "--d", "2", "--generator", "lattice:2:2:halo"],
        dir.path(),
    );
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["value"].as_f64().unwrap(), 0.25);
    assert_eq!(v["subsets_examined"].as_u64().unwrap(), 15);
    assert_eq!(v["exhaustive"], Value::Bool(true));
}

#[test]
fn solve_then_verify_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = plap(
        &[
            "solve",
            "--generator",
            "two-node",
            "--p",
            "3",
            "--T",
            "2",
            "--f0",
            "delta:1",
            "--with-mass",
            "--check",
            "mass,lq2",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("run/trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "t,0,1,mass");
    let masses: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(masses.len(), 201);
    assert!(masses.windows(2).all(|w| (w[1] - w[0]).abs() <= 1e-12));
    let report: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run/trajectory.json")).unwrap(),
    )
    .unwrap();
    assert!(report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["pass"] == Value::Bool(true)));
    assert_eq!(report["config"]["method"], "explicit-adaptive");

    let out = plap(
        &[
            "verify",
            "--generator",
            "two-node",
            "--trajectory",
            "run/trajectory.csv",
            "--check",
            "mass",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["check"], "mass_conservation");
    assert_eq!(v["pass"], Value::Bool(true));
    assert!(v["margin"].as_f64().unwrap() < 1e-12);

    let out = plap(
        &[
            "verify",
            "--generator",
            "path:3",
            "--trajectory",
            "run/trajectory.csv",
            "--check",
            "mass",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_p = plap(
        &[
            "solve",
            "--generator",
            "two-node",
            "--p",
            "1",
            "--T",
            "1",
            "--f0",
            "delta:0",
        ],
        dir.path(),
    );
    assert_eq!(bad_p.status.code(), Some(3));
    let missing = plap(
        &[
            "solve",
            "--graph",
            "missing.txt",
            "--p",
            "3",
            "--T",
            "1",
            "--f0",
            "delta:0",
        ],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
    std::fs::write(
        dir.path().join("g.txt"),
        "node a 1\nnode b 1\nedge a b 1\nedge a b 2\n",
    )
    .unwrap();
    let dup = plap(
        &[
            "solve", "--graph", "g.txt", "--p", "3", "--T", "1", "--f0", "delta:a",
        ],
        dir.path(),
    );
    assert_eq!(dup.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&dup.stderr).contains("line 4"));
    let stiff = plap(
        &[
            "solve",
            "--generator",
            "two-node",
            "--p",
            "3",
            "--T",
            "10",
            "--f0",
            "delta:0",
            "--method",
            "implicit",
            "--dt",
            "10",
            "--every",
            "10",
            "--inner-max-iter",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(stiff.status.code(), Some(4));
}

#[test]
fn generated_graphs_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = plap(
        &["generate", "lattice:2:3:halo", "--out", "box.txt"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("box.txt")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("node")).count(), 9);
    let a = plap(&["iso", "--d", "2", "--graph", "box.txt"], dir.path());
    let b = plap(
        &["iso", "--d", "2", "--generator", "lattice:2:3:halo"],
        dir.path(),
    );
    assert_eq!(json(&a)["value"], json(&b)["value"]);
}

#[test]
fn batch_scenarios_are_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = [
        (
            "a",
            r#"{"generator": "lattice:2:4:halo", "p": 1.5, "boundary": "dirichlet", "f0": "delta:center", "T": 0.5, "checks": ["positivity", "lqinf"]}"#,
        ),
        (
            "b",
            r#"{"generator": "random:12", "p": 3, "f0": "expr:i", "T": 1, "checks": ["mass"], "seed": 11}"#,
        ),
        (
            "c",
            r#"{"generator": "cycle:6", "p": 4, "f0": "indicator:0;1", "T": 1, "with_mass": true}"#,
        ),
    ];
    for (name, body) in scenarios {
        std::fs::write(dir.path().join(format!("{name}.json")), body).unwrap();
    }
    let run = |out: &str, jobs: &str| {
        let o = plap(
            &[
                "solve",
                "--scenario",
                "a.json",
                "b.json",
                "c.json",
                "--jobs",
                jobs,
                "--out",
                out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("one", "1");
    run("two", "3");
    for name in ["a", "b", "c"] {
        for ext in ["csv", "json"] {
            let x = std::fs::read(dir.path().join(format!("one/{name}.{ext}"))).unwrap();
            let y = std::fs::read(dir.path().join(format!("two/{name}.{ext}"))).unwrap();
            assert_eq!(x, y, "{name}.{ext}");
        }
    }
}

#[test]
fn plap_seed_overrides_default_seed() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |seed: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_plap"));
        c.args(["generate", "random:10"])
            .current_dir(dir.path())
            .env_remove("PLAP_SEED");
        if let Some(s) = seed {
            c.env("PLAP_SEED", s);
        }
        c.output().unwrap().stdout
    };
    assert_eq!(gen(None), gen(None));
    assert_eq!(gen(Some("24301")), gen(None));
    assert_ne!(gen(Some("1")), gen(None));
}

#[test]
fn fit_and_poincare() {
    let dir = tempfile::tempdir().unwrap();
    let out = plap(
        &[
            "solve",
            "--generator",
            "cycle:6",
            "--p",
            "3",
            "--T",
            "800",
            "--f0",
            "delta:0",
            "--every",
            "4",
            "--out",
            ".",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let fit = plap(
        &[
            "fit",
            "--generator",
            "cycle:6",
            "--trajectory",
            "trajectory.csv",
            "--p",
            "3",
            "--t-min",
            "200",
        ],
        dir.path(),
    );
    assert!(
        fit.status.success(),
        "{}",
        String::from_utf8_lossy(&fit.stderr)
    );
    let v = json(&fit);
    // psi behaves like (a + bt)^-2, so the log-log slope approaches -2 from above
    let slope = v["slope"].as_f64().unwrap();
    assert!(slope < -1.85 && slope > -2.0, "{v}");
    let pc = plap(
        &["poincare", "--generator", "path:9", "--samples", "200"],
        dir.path(),
    );
    let v = json(&pc);
    let lambda = 2.0 - 2.0 * (std::f64::consts::PI / 9.0).cos();
    assert!((v["constant"].as_f64().unwrap() - 1.0 / lambda.sqrt()).abs() < 1e-10);
    assert_eq!(v["holds"], Value::Bool(true));
}
