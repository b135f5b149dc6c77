use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shapesense"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// Numeric rows of a CSV with a header, dropping the leading sample column.
fn numbers(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_every_command_and_unknown_flags_are_usage_errors() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let help = stdout(&o);
    for cmd in [
        "shape",
        "lengths",
        "solve",
        "planar-study",
        "routing-opt",
        "sensitivity-map",
        "spatial-study",
        "--seed",
        "--jobs",
    ] {
        assert!(help.contains(cmd), "missing {cmd} in help");
    }
    let o = run(&["solve", "--help"]);
    assert!(stdout(&o).contains("--warm-start"));
    assert_eq!(code(&run(&["--frobnicate"])), 64);
    assert_eq!(code(&run(&["shape"])), 64);
    assert_eq!(code(&run(&["planar-study", "--table1", "--table2"])), 64);
}

#[test]
fn straight_and_arc_poses() {
    let dir = TempDir::new().unwrap();
    let robot = write(
        &dir,
        "arc.json",
        r#"{"version": 1, "L": 0.3, "basis": {"y": [0]}}"#,
    );
    let kappa = 2.0;
    let coeffs = write(&dir, "c.csv", &format!("c0_per_m\n0\n{kappa}\n"));
    let o = run(&["shape", &robot, &coeffs, "--points", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("sample,s_m,x_m,y_m,z_m,qw,qx,qy,qz"));
    let rows = numbers(&text);
    assert_eq!(rows.len(), 14);
    for r in &rows[..7] {
        let s = r[0];
        assert!(r[1].abs() < 1e-15 && r[2].abs() < 1e-15 && (r[3] - s).abs() < 1e-14);
    }
    for r in &rows[7..] {
        let s = r[0];
        let x = (1.0 - (kappa * s).cos()) / kappa;
        let z = (kappa * s).sin() / kappa;
        assert!(
            (r[1] - x).abs() < 1e-12 && r[2].abs() < 1e-15 && (r[3] - z).abs() < 1e-12,
            "{r:?}"
        );
    }
}

#[test]
fn malformed_config_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let robot = write(
        &dir,
        "bad.json",
        "{\n  \"version\": 1,\n  \"L\": 0.3,,\n}\n",
    );
    let coeffs = write(&dir, "c.csv", "c0\n0\n");
    let o = run(&["shape", &robot, &coeffs]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.json:3:"), "{}", stderr(&o));

    let robot = write(
        &dir,
        "typo.json",
        "{\"version\": 1, \"L\": 0.3,\n \"basis\": {\"y\": [0]}, \"lenght\": 1}",
    );
    let o = run(&["shape", &robot, &coeffs]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("typo.json:2:") && stderr(&o).contains("lenght"),
        "{}",
        stderr(&o)
    );

    let robot = write(
        &dir,
        "angles.json",
        r#"{"version": 1, "L": 0.3, "basis": {"y": [0]},
            "strings": [{"path": {"kind": "constant_pitch", "radius": 0.01, "angle": 0.0, "angle_deg": 0.0}, "anchor": 0.3}]}"#,
    );
    let o = run(&["shape", &robot, &coeffs]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("strings[0]"), "{}", stderr(&o));
}

#[test]
fn degree_keys_match_radians() {
    let dir = TempDir::new().unwrap();
    let make = |angle: &str| {
        format!(
            r#"{{"version": 1, "L": 0.3, "basis": {{"x": [0], "y": [0]}},
                "strings": [{{"path": {{"kind": "constant_pitch", "radius": 0.02, {angle}}}, "anchor": 0.3}},
                            {{"path": {{"kind": "constant_pitch", "radius": 0.02}}, "anchor": 0.2}}]}}"#
        )
    };
    let deg = write(&dir, "deg.json", &make(r#""angle_deg": 60"#));
    let rad = write(
        &dir,
        "rad.json",
        &make(&format!(r#""angle": {}"#, std::f64::consts::PI / 3.0)),
    );
    let coeffs = write(&dir, "c.csv", "c0,c1\n1.5,-2.0\n");
    let a = numbers(&stdout(&run(&["lengths", &deg, &coeffs])));
    let b = numbers(&stdout(&run(&["lengths", &rad, &coeffs])));
    assert!((a[0][0] - b[0][0]).abs() < 1e-15 && a[0][0] != 0.0);
}

#[test]
fn lengths_then_solve_round_trips() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("planar_table.json", "c0,c1,c2\n0,0,0\n0.3,-0.2,0.15\n-0.5,0.1,0.05\n", 1e-10),
        (
            "helical_soft.json",
            "c0,c1,c2,c3,c4,c5,c6,c7\n1.0,0.5,-0.2,-1.0,0.3,0.1,0.5,0.2\n-2.0,0.2,0.1,1.5,-0.4,0.0,-1.0,0.3\n",
            1e-8,
        ),
    ];
    for (name, coeffs, tol) in cases {
        let robot = config(name);
        let c_path = write(&dir, "c.csv", coeffs);
        let l_path = dir.path().join("l.csv");
        let o = run(&["lengths", p(&robot), &c_path, "-o", p(&l_path)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        for warm in [false, true] {
            let out = dir.path().join("rec.csv");
            let diag = dir.path().join("diag.json");
            let mut args = vec![
                "solve",
                p(&robot),
                p(&l_path),
                "-o",
                p(&out),
                "--diagnostics",
                p(&diag),
            ];
            if warm {
                args.push("--warm-start");
            }
            let o = run(&args);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            let rec = numbers(&std::fs::read_to_string(&out).unwrap());
            let truth: Vec<Vec<f64>> = coeffs
                .lines()
                .skip(1)
                .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
                .collect();
            for (r, t) in rec.iter().zip(&truth) {
                let err: f64 = r
                    .iter()
                    .zip(t)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(err <= tol, "{name}: {err:e}");
            }
            let d: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&diag).unwrap()).unwrap();
            assert_eq!(d["status"], "ok");
            assert_eq!(d["rows"].as_array().unwrap().len(), truth.len());
        }
    }
}

#[test]
fn solver_failures_exit_four() {
    let dir = TempDir::new().unwrap();
    let twin = r#"{"version": 1, "L": 1.0, "basis": {"y": [0, 1, 2]},
        "strings": [{"path": {"kind": "constant_pitch", "rx": 0.1}, "anchor": 0.2},
                    {"path": {"kind": "constant_pitch", "rx": 0.1}, "anchor": 0.2},
                    {"path": {"kind": "constant_pitch", "rx": 0.25}, "anchor": 1.0}]}"#;
    let robot = write(&dir, "twin.json", twin);
    let m = write(&dir, "m.csv", "l0_m,l1_m,l2_m\n0.001,0.001,0.002\n");
    let diag = dir.path().join("d.json");
    let o = run(&["solve", &robot, &m, "--diagnostics", p(&diag)]);
    assert_eq!(code(&o), 4);
    let d: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&diag).unwrap()).unwrap();
    assert_eq!(d["error"]["kind"], "SingularDesign");

    let two = r#"{"version": 1, "L": 1.0, "basis": {"y": [0, 1, 2]},
        "strings": [{"path": {"kind": "constant_pitch", "rx": 0.1}, "anchor": 0.2},
                    {"path": {"kind": "constant_pitch", "rx": 0.25}, "anchor": 1.0}]}"#;
    let robot = write(&dir, "two.json", two);
    let m = write(&dir, "m2.csv", "l0_m,l1_m\n0.001,0.002\n");
    let o = run(&["solve", &robot, &m]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("underdetermined"), "{}", stderr(&o));
}

#[test]
fn inadmissible_configuration_exits_three() {
    let dir = TempDir::new().unwrap();
    let coeffs = write(&dir, "c.csv", "c0,c1,c2\n0,40,0\n");
    let o = run(&["shape", p(&config("planar_rod.json")), &coeffs]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let o = run(&["lengths", p(&config("planar_rod.json")), &coeffs]);
    assert_eq!(code(&o), 3);
}

#[test]
fn table1_rows() {
    let o = run(&["planar-study", "--table1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("r1_over_L,r2_over_L,sa1_over_L,sa2_over_L,aleph_config_m2,beta_pct"));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 8);
    let first = &rows[0];
    assert!((first[2] - 0.204).abs() <= 0.01 && (first[3] - 0.772).abs() <= 0.01);
    assert!((first[4] / 1.03e-3 - 1.0).abs() <= 0.03 && (first[5] - 64.0).abs() <= 3.0);
}

#[test]
fn routing_opt_counts_the_helical_space() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ranked.csv");
    let o = run(&[
        "routing-opt",
        p(&config("helical_soft.json")),
        p(&config("helical_soft_space.json")),
        "--samples",
        "2",
        "--top",
        "5",
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stdout(&o).contains("20000 designs evaluated"),
        "{}",
        stdout(&o)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text
        .lines()
        .next()
        .unwrap()
        .contains("aleph_full_at_0.2930_m"));
}

#[test]
fn seeded_output_is_reproducible_across_job_counts() {
    let dir = TempDir::new().unwrap();
    let robot = config("torsion_stiff.json");
    let space = config("torsion_stiff_space.json");
    let mut outputs = Vec::new();
    for jobs in ["1", "2", "1"] {
        let out = dir.path().join(format!("r{}.csv", outputs.len()));
        let o = run(&[
            "--jobs",
            jobs,
            "--seed",
            "5",
            "routing-opt",
            p(&robot),
            p(&space),
            "--samples",
            "8",
            "-o",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).contains("625 designs evaluated"));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let out = dir.path().join("other.csv");
    run(&[
        "--seed",
        "6",
        "routing-opt",
        p(&robot),
        p(&space),
        "--samples",
        "8",
        "-o",
        p(&out),
    ]);
    assert_ne!(outputs[0], std::fs::read(&out).unwrap());

    let spatial = |seed: &str| {
        stdout(&run(&[
            "--seed",
            seed,
            "spatial-study",
            p(&config("helical_soft.json")),
            "--cases",
            "3",
        ]))
    };
    assert_eq!(spatial("2"), spatial("2"));
}

#[test]
fn sensitivity_map_grid_matches_step() {
    let o = run(&["sensitivity-map", "--radii=0.1,-0.2", "--step", "0.1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11 * 11);
    let mut axis: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    axis.dedup();
    assert_eq!(axis.len(), 11);
    assert!(rows.iter().all(|r| r[2] >= 0.0));
}

#[test]
fn spatial_study_reports_every_case() {
    let o = run(&[
        "spatial-study",
        p(&config("helical_soft.json")),
        "--cases",
        "4",
        "--at",
        "0.1172,0.293",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("case,s_m,iterations,position_error_pct_L"));
    assert_eq!(text.lines().count(), 1 + 4 * 2);
}
