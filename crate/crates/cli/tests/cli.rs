//! End-to-end runs of the `ckmplace` binary: artifact layout, CSV shape,
//! seed handling, and error reporting.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ckmplace::ckm::load_ckm;

const BIN: &str = env!("CARGO_BIN_EXE_ckmplace");

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    // Keep the tests immune to seeds exported in the surrounding shell.
    cmd.env_remove("CKMPLACE_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary should start")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn write(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
}

const SCENE_TOML: &str = r#"
[area]
xmin = -40.0
xmax = 40.0
ymin = -40.0
ymax = 40.0

[generator]
ref_gain_db = -30.0
blockage_db = 18.0
penetration_db_per_m = 0.8
altitude_m = 50.0

[[building]]
xmin = -20.0
xmax = 0.0
ymin = -10.0
ymax = 10.0
height_m = 30.0

[[gbs]]
x_m = -25.0
y_m = 0.0
height_m = 10.0

[[gbs]]
x_m = 25.0
y_m = 5.0
height_m = 10.0
"#;

/// Config with one station whose map is generated from the scene file.
fn config_toml(seed: u64, extra_run: &str) -> String {
    format!(
        r#"
[scene]
area = {{ xmin_m = -40.0, xmax_m = 40.0, ymin_m = -40.0, ymax_m = 40.0 }}
altitude_m = 50.0
noise_dbm = -100.0

[[scene.gbs]]
x_m = -25.0
y_m = 0.0
height_m = 10.0
scene = "city.toml"
spacing_m = 10.0

[uav]
count = 1
power_dbm = 30.0

[optimizer]
delta0_m = 20.0
epsilon_m = 1.0
max_iters = 120
seed = {seed}

[run]
grid_step_m = 10.0
{extra_run}
"#
    )
}

fn read_csv(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn generate_ckm_writes_loadable_maps_for_every_station() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("city.toml");
    write(&scene, SCENE_TOML);
    let out = dir.path().join("maps");

    let res = run(
        &[
            "generate-ckm",
            "--scene",
            scene.to_str().unwrap(),
            "--gbs",
            "all",
            "--spacing",
            "20",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&res);

    for i in 1..=2 {
        let map = load_ckm(&out.join(format!("gbs{i}.csv"))).unwrap();
        assert_eq!(map.spacing_m(), 20.0);
        assert_eq!((map.nx(), map.ny()), (5, 5));
    }

    let single = run(
        &[
            "generate-ckm",
            "--scene",
            scene.to_str().unwrap(),
            "--gbs",
            "2",
            "--spacing",
            "40",
            "--out",
            dir.path().join("one").to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&single);
    assert!(dir.path().join("one/gbs2.csv").exists());
    assert!(!dir.path().join("one/gbs1.csv").exists());
}

#[test]
fn generate_ckm_rejects_out_of_range_station_index() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("city.toml");
    write(&scene, SCENE_TOML);
    let res = run(
        &[
            "generate-ckm",
            "--scene",
            scene.to_str().unwrap(),
            "--gbs",
            "3",
            "--spacing",
            "20",
            "--out",
            dir.path().join("x").to_str().unwrap(),
        ],
        &[],
    );
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("out of range"), "{err}");
}

#[test]
fn optimize_writes_monotone_convergence_and_result_rows() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("city.toml"), SCENE_TOML);
    let cfg = dir.path().join("exp.toml");
    write(&cfg, &config_toml(5, ""));
    let out = dir.path().join("out");

    let res = run(
        &[
            "optimize",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&res);

    let conv = read_csv(&out.join("convergence.csv"));
    assert_eq!(conv[0], "iter,objective_bps_hz,delta_m,accepted,eval_count,q1x_m,q1y_m");
    assert!(conv.len() >= 2, "needs the initial record plus iterations");
    let mut last = f64::NEG_INFINITY;
    for (i, line) in conv[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7, "row {i}: {line}");
        assert_eq!(fields[0].parse::<usize>().unwrap(), i);
        let objective: f64 = fields[1].parse().unwrap();
        assert!(objective >= last, "objective dipped at row {i}");
        last = objective;
    }

    let result = read_csv(&out.join("result.csv"));
    assert_eq!(result[0], "scheme,power_dbm,sum_rate_bps_hz,rate_k1,eval_count,wall_ms");
    assert_eq!(result.len(), 2);
    let fields: Vec<&str> = result[1].split(',').collect();
    assert_eq!(fields[0], "dfo");
    assert_eq!(fields[1], "30");
    assert_eq!(fields[5], "0", "wall_ms must be 0 without --timing");

    let placement = read_csv(&out.join("placement.csv"));
    assert_eq!(placement[0], "uav,x_m,y_m");
    assert_eq!(placement.len(), 2);
}

#[test]
fn seed_env_var_reproduces_the_config_seed_run() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("city.toml"), SCENE_TOML);
    let cfg_a = dir.path().join("a.toml");
    write(&cfg_a, &config_toml(7, ""));
    let cfg_b = dir.path().join("b.toml");
    write(&cfg_b, &config_toml(1, ""));

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert_ok(&run(
        &["optimize", "--config", cfg_a.to_str().unwrap(), "--out", out_a.to_str().unwrap()],
        &[],
    ));
    assert_ok(&run(
        &["optimize", "--config", cfg_b.to_str().unwrap(), "--out", out_b.to_str().unwrap()],
        &[("CKMPLACE_SEED", "7")],
    ));

    let a = fs::read(out_a.join("convergence.csv")).unwrap();
    let b = fs::read(out_b.join("convergence.csv")).unwrap();
    assert_eq!(a, b, "env seed 7 must reproduce config seed 7 bytes");
}

#[test]
fn sweep_emits_one_row_per_level_and_scheme() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("city.toml"), SCENE_TOML);
    let cfg = dir.path().join("exp.toml");
    // Keep the per-level searches short; the row count is the point here.
    write(&cfg, &config_toml(3, "").replace("max_iters = 120", "max_iters = 25"));
    let out = dir.path().join("out");

    let res = run(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--power-dbm",
            "0:5:30",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&res);

    let rows = read_csv(&out.join("result.csv"));
    assert_eq!(rows.len(), 1 + 7 * 3);
    let mut expected_level = 0.0;
    for chunk in rows[1..].chunks(3) {
        for (scheme, line) in ["dfo", "hover", "los"].iter().zip(chunk) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(&fields[0], scheme);
            assert_eq!(fields[1].parse::<f64>().unwrap(), expected_level);
        }
        expected_level += 5.0;
    }
}

#[test]
fn exhaustive_consumes_exactly_the_lattice_count() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("city.toml"), SCENE_TOML);
    let cfg = dir.path().join("exp.toml");
    write(&cfg, &config_toml(1, ""));
    let out = dir.path().join("out");

    let res = run(
        &[
            "exhaustive",
            "--config",
            cfg.to_str().unwrap(),
            "--step",
            "20",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&res);
    let rows = read_csv(&out.join("result.csv"));
    let fields: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(fields[0], "exhaustive");
    // 80 m side at 20 m steps: 5 points per axis, 25 tuples for one UAV.
    assert_eq!(fields[4], "25");
}

#[test]
fn baseline_scheme_flag_selects_the_scheme() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("city.toml"), SCENE_TOML);
    let cfg = dir.path().join("exp.toml");
    write(&cfg, &config_toml(1, ""));

    for scheme in ["hover", "los"] {
        let out = dir.path().join(scheme);
        let res = run(
            &[
                "baseline",
                "--config",
                cfg.to_str().unwrap(),
                "--scheme",
                scheme,
                "--out",
                out.to_str().unwrap(),
            ],
            &[],
        );
        assert_ok(&res);
        let rows = read_csv(&out.join("result.csv"));
        assert!(rows[1].starts_with(scheme));
    }

    // No flag and no run.scheme in the config: a clear error.
    let res = run(
        &[
            "baseline",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("none").to_str().unwrap(),
        ],
        &[],
    );
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("run.scheme"), "{err}");
}

#[test]
fn invalid_shrink_factor_fails_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("city.toml"), SCENE_TOML);
    let cfg = dir.path().join("exp.toml");
    write(&cfg, &config_toml(1, "").replace("seed = 1", "seed = 1\nbeta = 1.5"));

    let res = run(
        &[
            "optimize",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("optimizer.beta"), "{err}");
    assert!(err.contains("must lie strictly between 0 and 1"), "{err}");
}

#[test]
fn missing_output_dir_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("city.toml"), SCENE_TOML);
    let cfg = dir.path().join("exp.toml");
    write(&cfg, &config_toml(1, ""));

    let res = run(&["optimize", "--config", cfg.to_str().unwrap()], &[]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("run.output_dir"), "{err}");

    // With run.output_dir set, --out is optional and paths resolve against
    // the config file's directory.
    let cfg2 = dir.path().join("exp2.toml");
    write(&cfg2, &config_toml(1, "output_dir = \"from_config\""));
    assert_ok(&run(&["optimize", "--config", cfg2.to_str().unwrap()], &[]));
    assert!(dir.path().join("from_config/result.csv").exists());
}
