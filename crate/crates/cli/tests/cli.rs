use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smg::config::read_grid_csv;
use smg::{builtin_heisenberg, solve_regularized, Grid, SolverConfig};
use tempfile::TempDir;

fn smg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smg")).args(args).env_remove("SMG_THREADS").output().unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    smg(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

const LINEAR: &str = r#"
frame = "heisenberg"
[domain]
a1 = 0.0
b1 = 1.0
a2 = 0.0
b2 = 1.0
n1 = 17
n2 = 17
[solver]
eps = 0.01
[bc]
kind = "expression"
value = "2*x1 + 1"
"#;

const BURGERS: &str = r#"
frame = "heisenberg"
[domain]
a1 = -1.0
b1 = 1.0
a2 = -1.0
b2 = 1.0
n1 = 17
n2 = 17
[solver]
eps_schedule = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
[bc]
kind = "expression"
value = "x2 / (x1 + 2)"
[sweep]
m = 2
p = 4
subdomain = [-0.5, 0.5, -0.5, 0.5]
"#;

#[test]
fn solve_linear_profile() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), LINEAR);
    let o = run("solve", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let u = read_grid_csv(&tmp.path().join("u.csv")).unwrap();
    let g = *u.grid();
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            assert!((u[(i, j)] - (2.0 * g.x1(i) + 1.0)).abs() < 1e-8);
        }
    }
    let res = fs::read_to_string(tmp.path().join("residuals.csv")).unwrap();
    assert!(res.starts_with("stage,iter,sup_residual\n0,0,"));
}

#[test]
fn zero_eps_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &LINEAR.replace("eps = 0.01", "eps = 0"));
    let o = run("solve", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("eps must be positive"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_named() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &LINEAR.replace("eps = 0.01", "epss = 0.01"));
    let o = run("solve", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epss"), "{}", stderr(&o));
}

#[test]
fn missing_config_file() {
    let tmp = TempDir::new().unwrap();
    let o = run("solve", &tmp.path().join("nope.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two() {
    let tmp = TempDir::new().unwrap();
    let body = BURGERS.replace("eps_schedule = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]", "eps = 0.01\nmax_iters = 1");
    let cfg = write_config(tmp.path(), &body);
    let o = run("solve", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(tmp.path().join("residuals.csv").exists());
}

#[test]
fn viscosity_writes_sweep_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BURGERS);
    let o = run("viscosity", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let lines: Vec<_> = sweep.lines().collect();
    assert_eq!(lines[0], "eps,m,p,norm_u,norm_Yu,lip_X1u,lip_Yu");
    assert_eq!(lines.len(), 6);
    let res = fs::read_to_string(tmp.path().join("residuals.csv")).unwrap();
    assert!(res.lines().any(|l| l.starts_with("4,")));
}

#[test]
fn viscosity_rejects_increasing_schedule() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &BURGERS.replace("[1e-1, 3e-2, 1e-2, 3e-3, 1e-3]", "[1e-2, 1e-1]"));
    let o = run("viscosity", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn viscosity_lipschitz_cap_reports_stage() {
    let tmp = TempDir::new().unwrap();
    let body = BURGERS.replace("eps_schedule =", "lipschitz_cap = 0.1\neps_schedule =");
    let cfg = write_config(tmp.path(), &body);
    let o = run("viscosity", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stage 0"), "{}", stderr(&o));
}

const FLAT: &str = r#"
frame = "heisenberg"
[domain]
a1 = -1.0
b1 = 1.0
a2 = -1.0
b2 = 1.0
n1 = 17
n2 = 17
[bc]
kind = "expression"
value = "0"
[foliate]
lattice = [5, 5]
t_min = -0.5
t_max = 0.5
dt = 0.05
"#;

#[test]
fn foliate_flat_lattice() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), FLAT);
    let o = run("foliate", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    let rows: Vec<_> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.ends_with(",0.0000000000000000e0")), "{report}");
    let leaves = fs::read_to_string(tmp.path().join("leaves.csv")).unwrap();
    assert!(leaves.starts_with("leaf_id,t,x1,x2,u\n"));
}

#[test]
fn foliate_seed_lattice_flag_and_outside_seed() {
    let tmp = TempDir::new().unwrap();
    let body = FLAT.replace("lattice = [5, 5]", "seeds = [[5.0, 5.0]]");
    let cfg = write_config(tmp.path(), &body);
    let o = run("foliate", &cfg, tmp.path(), &["--seed-lattice", "2x3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 7);
    assert_eq!(report.lines().last().unwrap(), "6,NaN");
}

#[test]
fn foliate_missing_solution_file() {
    let tmp = TempDir::new().unwrap();
    let body = FLAT.replace("[foliate]", "[foliate]\nsolution = \"missing.csv\"");
    let cfg = write_config(tmp.path(), &body);
    let o = run("foliate", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solve_foliate_round_trip_is_bit_exact() {
    let tmp = TempDir::new().unwrap();
    let body = BURGERS.replace("eps_schedule = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]", "eps = 0.01")
        + "[foliate]\nsolution = \"u.csv\"\nlattice = [3, 3]\n";
    let cfg = write_config(tmp.path(), &body);
    assert!(run("solve", &cfg, tmp.path(), &[]).status.success());
    let grid = Grid::square(-1.0, 1.0, 16).unwrap();
    let bc = grid.sample(|x, y| y / (x + 2.0));
    let mem = solve_regularized(&builtin_heisenberg(), 0.01, &bc, None, &SolverConfig::default()).unwrap();
    let disk = read_grid_csv(&tmp.path().join("u.csv")).unwrap();
    assert_eq!(disk.grid(), mem.u.grid());
    for (a, b) in disk.values().iter().zip(mem.u.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let o = run("foliate", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
}

const DIAG: &str = r#"
frame = "heisenberg"
[domain]
a1 = -1.0
b1 = 1.0
a2 = -1.0
b2 = 1.0
n1 = 33
n2 = 33
[solver]
eps = 0.01
[bc]
kind = "expression"
value = "x2 / (x1 + 2)"
[diagnose]
probes = ["trigonometric", "x1^2 + x2"]
alphas = [0.5, 1.0, 1.5]
"#;

fn ratio_columns(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "radius,ratio_alpha0.5,ratio_alpha1,ratio_alpha1.5");
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    (0..3).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
}

#[test]
fn diagnose_order_pattern() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), DIAG);
    let o = run("diagnose", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for stem in ["trigonometric", "probe1"] {
        let cols = ratio_columns(&tmp.path().join(format!("order_{stem}.csv")));
        assert!(cols[0].windows(2).all(|w| w[1] < w[0]));
        let (lo, hi) = cols[1].iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 2.0);
        assert!(cols[2].windows(2).all(|w| w[1] > 2.0 * w[0]));
        assert!(tmp.path().join(format!("order_{stem}_alpha1.5.csv")).exists());
    }
    let cac = fs::read_to_string(tmp.path().join("caccioppoli.csv")).unwrap();
    assert!(cac.starts_with("eps,p,lhs,rhs1,rhs2,ratio\n"));
}

#[test]
fn diagnose_empty_probe_list() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &DIAG.replace("probes = [\"trigonometric\", \"x1^2 + x2\"]", "probes = []"));
    let o = run("diagnose", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{}\n[foliate]\nlattice = [4, 4]\n", DIAG.replace("n1 = 33\nn2 = 33", "n1 = 17\nn2 = 17"));
    let cfg = write_config(tmp.path(), &body);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        for cmd in ["solve", "foliate", "diagnose"] {
            let o = run(cmd, &cfg, out, &["--threads", threads]);
            assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        }
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.len() >= 6);
    assert_eq!(sa, sb);
}

#[test]
fn thread_flag_validation() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), LINEAR);
    let o = run("solve", &cfg, tmp.path(), &["--threads", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_smg"))
        .args(["solve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()])
        .env("SMG_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = run("foliate", &cfg, tmp.path(), &["--seed-lattice", "3by3"]);
    assert_eq!(o.status.code(), Some(1));
}
