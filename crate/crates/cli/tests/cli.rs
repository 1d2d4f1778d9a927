use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use serde_json::Value;
use tempfile::TempDir;

const MOTOR: &str = r#"
[system]
a = [[0.0, 1.0], [-2.0, -3.0]]
b = [[0.0], [2.0]]
c = [[1.0, 0.0]]
"#;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

struct Run {
    code: i32,
    stderr: String,
    out: PathBuf,
}

impl Run {
    fn summary(&self) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out.join("summary.json")).unwrap()).unwrap()
    }

    fn file(&self, name: &str) -> String {
        fs::read_to_string(self.out.join(name)).unwrap()
    }
}

fn symlqr(dir: &TempDir, args: &[&str], config: &Path, env_out: Option<&Path>) -> Run {
    let out = dir.path().join("out");
    let mut cmd = Process::new(env!("CARGO_BIN_EXE_symlqr"));
    cmd.args(args).arg(config).env_remove("SYMLQR_OUT_DIR");
    match env_out {
        Some(p) => {
            cmd.env("SYMLQR_OUT_DIR", p);
        }
        None => {
            cmd.arg("--out").arg(&out);
        }
    }
    let output = cmd.output().unwrap();
    Run {
        code: output.status.code().unwrap(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        out: env_out.map(Path::to_path_buf).unwrap_or(out),
    }
}

fn with_config(text: &str, args: &[&str]) -> (TempDir, Run) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    let run = symlqr(&dir, args, &path, None);
    (dir, run)
}

fn motor_config(extra: &str) -> String {
    format!(
        "{MOTOR}\n[problem]\nq = 1.0\nr = 2.0\nx0 = [1.0, 1.0]\nhorizon = 4.0\nintervals = 800\n{extra}"
    )
}

#[test]
fn example1_converges_with_decreasing_gap() {
    let dir = TempDir::new().unwrap();
    let run = symlqr(&dir, &["solve-fh"], &configs().join("example1.toml"), None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let s = run.summary();
    let d = &s["details"];
    assert_eq!(d["gap_strictly_decreasing"], Value::Bool(true));
    assert!(d["final_relative_error"].as_f64().unwrap() < 1e-3);
    assert_eq!(s["alpha"].as_f64(), Some(1.0));
    assert!(s["contraction"].as_f64().unwrap() < 1.0);
    assert_eq!(s["plant_runs"].as_u64(), Some(2 * d["iterations"].as_u64().unwrap()));
    assert!(s["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(s["config"]["solver"]["alpha"].as_f64(), Some(1.0));
    let iterations = run.file("iterations.csv");
    assert!(iterations.starts_with("k,residual,cost,error,relative_error,gap,relative_gap\n"));
    assert_eq!(iterations.lines().count(), d["iterations"].as_u64().unwrap() as usize + 2);
    assert!(run.file("history.csv").starts_with("t,u_star_1,"));
}

#[test]
fn example2_recovers_the_motor_gain() {
    let dir = TempDir::new().unwrap();
    let run = symlqr(&dir, &["solve-ih"], &configs().join("example2.toml"), None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let d = &run.summary()["details"];
    assert!(d["error"].as_f64().unwrap() < 5e-3);
    let k_inf = &d["k_inf"][0];
    assert!((k_inf[0].as_f64().unwrap() - 0.22474).abs() < 1e-5);
    assert!((k_inf[1].as_f64().unwrap() - 0.07313).abs() < 1e-5);
    assert_eq!(d["provenance"], "noise_free");
    assert!(run.file("trials.csv").starts_with("trial,k_11,k_12,error\n"));
}

#[test]
fn averaging_beats_the_typical_single_trial() {
    let text = fs::read_to_string(configs().join("example2_noisy.toml"))
        .unwrap()
        .replace("trials = 400", "trials = 100")
        .replace("intervals = 2000", "intervals = 800");
    let (_dir, run) = with_config(&text, &["solve-ih"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let d = &run.summary()["details"];
    assert_eq!(d["provenance"], "averaged");
    assert!(d["error"].as_f64().unwrap() < d["median_trial_error"].as_f64().unwrap());
    assert_eq!(run.file("trials.csv").lines().count(), 101);
}

#[test]
fn horizon_sweep_is_monotone() {
    let text = motor_config("[solver]\nnorm = \"linf\"\n[gain]\niterations = 40\nsamples = 2\nt_bar = 0.25\nhorizons = [1.0, 2.0, 4.0, 8.0]\n");
    let (_dir, run) = with_config(&text, &["solve-ih"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.summary()["details"]["sweep"]["monotone"], Value::Bool(true));
    assert_eq!(run.file("sweep.csv").lines().count(), 5);
}

#[test]
fn zero_weight_converges_to_zero_control_at_once() {
    let text = format!("{MOTOR}\n[problem]\nq = 0.0\nr = 2.0\nx0 = [1.0, 1.0]\nhorizon = 2.0\nintervals = 200\n");
    let (_dir, run) = with_config(&text, &["solve-fh"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let s = run.summary();
    // the first update lands on zero and the second confirms it
    assert!(s["details"]["iterations"].as_u64().unwrap() <= 2);
    let control = run.file("control.csv");
    assert!(control.lines().skip(1).all(|l| l.ends_with(",0.0") || l.ends_with(",-0.0")));
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let bad_r = format!("{MOTOR}\n[problem]\nq = 1.0\nr = -1.0\nx0 = [1.0, 1.0]\nhorizon = 2.0\nintervals = 100\n");
    let (_d, run) = with_config(&bad_r, &["solve-fh"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("problem.r"), "{}", run.stderr);

    let bad_noise = motor_config("[noise]\nkind = \"gaussian_l2\"\nsigma = -0.1\n");
    assert_eq!(with_config(&bad_noise, &["noise-study"]).1.code, 2);
    let mismatched = motor_config("[noise]\nkind = \"uniform_bounded\"\nsigma = 0.1\n");
    assert_eq!(with_config(&mismatched, &["noise-study"]).1.code, 2);
    let unknown = motor_config("[noise]\nkind = \"gaussian_l2\"\nsigma = 0.1\ncolour = \"pink\"\n");
    assert_eq!(with_config(&unknown, &["noise-study"]).1.code, 2);
    assert_eq!(with_config("[problem]\nq = 1.0\n", &["oracle"]).1.code, 2);

    let asymmetric = "[system]\na = [[-1.0, 0.0], [0.0, -2.0]]\nb = [[1.0, 0.0], [0.0, 1.0]]\nc = [[1.0, 1.0], [0.0, 1.0]]\n\
                      [problem]\nq = 1.0\nr = 1.0\nx0 = [1.0, 1.0]\nhorizon = 1.0\nintervals = 100\n";
    let (_d, run) = with_config(asymmetric, &["check-symmetry"]);
    assert_eq!(run.code, 2);
    assert_eq!(run.summary()["details"], Value::Null);
    assert_eq!(with_config(asymmetric, &["solve-fh"]).1.code, 2);
}

#[test]
fn divergence_exits_with_code_3() {
    let text = format!("{MOTOR}\n[problem]\nq = 400.0\nr = 1.0\nx0 = [1.0, 1.0]\nhorizon = 4.0\nintervals = 400\n[solver]\nalpha = 1.0\nmax_iter = 500\n");
    let (_d, run) = with_config(&text, &["solve-fh"]);
    assert_eq!(run.code, 3, "{}", run.stderr);
    let s = run.summary();
    assert!(s["error"].as_str().unwrap().contains("diverged"));
    assert!(!s["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn missing_config_exits_with_code_4() {
    let dir = TempDir::new().unwrap();
    let run = symlqr(&dir, &["oracle"], &dir.path().join("nope.toml"), None);
    assert_eq!(run.code, 4);
}

#[test]
fn degenerate_samples_exit_with_code_5() {
    let text = format!("{MOTOR}\n[problem]\nq = 1.0\nr = 2.0\nx0 = [0.0, 0.0]\nhorizon = 4.0\nintervals = 400\n[solver]\nnorm = \"linf\"\n");
    let (_d, run) = with_config(&text, &["solve-ih"]);
    assert_eq!(run.code, 5);
    assert!(run.stderr.contains("perturb problem.x0"));
}

#[test]
fn oracle_reports_closed_forms() {
    let (_d, run) = with_config(&motor_config(""), &["oracle"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let are = &run.summary()["details"]["are"];
    assert!((are["l2_rate"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-10);
    assert!((are["lambda"][0][0].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-8);
    assert!((are["lambda"][1][0].as_f64().unwrap() - 3f64.sqrt()).abs() < 1e-8);

    let tanh = "[system]\na = [[0.0]]\nb = [[1.0]]\nc = [[1.0]]\n[problem]\nq = 1.0\nr = 1.0\nx0 = [1.0]\nhorizon = 1.0\nintervals = 2000\n";
    let (_d, run) = with_config(tanh, &["oracle"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let p0 = run.summary()["details"]["p0"][0][0].as_f64().unwrap();
    assert!((p0 - 1f64.tanh()).abs() < 1e-8);

    let undetectable = "[system]\na = [[-1.0, 0.0], [0.0, 0.0]]\nb = [[1.0], [1.0]]\nc = [[1.0, 0.0]]\n\
                        [problem]\nq = 1.0\nr = 1.0\nx0 = [1.0, 1.0]\nhorizon = 1.0\nintervals = 100\n";
    let (_d, run) = with_config(undetectable, &["oracle"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("detect"), "{}", run.stderr);
}

#[test]
fn noise_studies() {
    let clean = motor_config("[study]\ntrials = 5\niterations = 3\n");
    let (_d, run) = with_config(&clean, &["noise-study"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.summary()["details"]["passed"], Value::Bool(true));

    let (_d, run) = with_config(&motor_config("[noise]\nkind = \"gaussian_l2\"\nsigma = 0.05\n[study]\ntrials = 400\n"), &["noise-study"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let s = run.summary();
    assert_eq!(s["details"]["report"]["mean_check"], Value::Bool(true));
    assert!(run.file("nodes.csv").starts_with("t,mean_deviation,standard_error,variance\n"));
}

#[test]
fn step_rules_resolve_to_numbers() {
    for (rule, runs_expected) in [("auto-safe", false), ("auto-power", true)] {
        let text = motor_config(&format!("[solver]\nalpha = \"{rule}\"\ntolerance = 1e-8\n"));
        let (_d, run) = with_config(&text, &["solve-fh"]);
        assert_eq!(run.code, 0, "{}", run.stderr);
        let s = run.summary();
        let alpha = s["alpha"].as_f64().unwrap();
        assert!(alpha > 0.0 && alpha <= 1.0);
        assert_eq!(s["config"]["solver"]["alpha"].as_f64(), Some(alpha));
        let solver_runs = 2 * s["details"]["iterations"].as_u64().unwrap();
        assert_eq!(s["plant_runs"].as_u64().unwrap() > solver_runs, runs_expected);
    }
    let (_d, run) = with_config(&motor_config("[solver]\nalpha = \"auto-magic\"\n"), &["solve-fh"]);
    assert_eq!(run.code, 2);
}

#[test]
fn artifacts_are_reproducible_and_env_sets_the_default_directory() {
    let text = motor_config("[noise]\nkind = \"uniform_bounded\"\nbound = 0.1\n[simulate]\ninput = [0.5]\n");
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, &text).unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let a = symlqr(&dir, &["simulate"], &path, Some(&first));
    let b = symlqr(&dir, &["simulate"], &path, Some(&second));
    assert_eq!((a.code, b.code), (0, 0));
    assert_eq!(a.file("simulation.csv"), b.file("simulation.csv"));
    assert!(a.file("simulation.csv").starts_with("t,u_1,y_1,x_1,x_2\n"));

    let (_d, fh1) = with_config(&motor_config("[noise]\nkind = \"gaussian_l2\"\nsigma = 0.01\n[solver]\nmax_iter = 5\n"), &["solve-fh"]);
    let (_d2, fh2) = with_config(&motor_config("[noise]\nkind = \"gaussian_l2\"\nsigma = 0.01\n[solver]\nmax_iter = 5\n"), &["solve-fh"]);
    assert_eq!(fh1.file("control.csv"), fh2.file("control.csv"));
    assert_eq!(fh1.file("iterations.csv"), fh2.file("iterations.csv"));
}

#[test]
fn check_symmetry_reports_gains() {
    let dir = TempDir::new().unwrap();
    let run = symlqr(&dir, &["check-symmetry"], &configs().join("example1.toml"), None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let d = &run.summary()["details"];
    assert_eq!(d["externally_symmetric"], Value::Bool(true));
    assert!(d["internal_defect"].as_f64().unwrap() < 1e-12);
    // eigenvalues of A lie below -1.2
    assert!(d["hinf_norm"].as_f64().unwrap() <= 1.0 / 1.2);
    assert!(d["gain_l2"].as_f64().unwrap() <= d["hinf_norm"].as_f64().unwrap() * (1.0 + 1e-6));
}
