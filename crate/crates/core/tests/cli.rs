use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hpl_core::neural::{Architecture, OperatorWeights};

const FIG2: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/fig2.toml");

fn hpl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpl"))
        .args(args)
        .current_dir(dir)
        .env_remove("HPL_THREADS")
        .output()
        .expect("spawn hpl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csv_column(text: &str, col: usize) -> Vec<f64> {
    text.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

const CONSTANT: &str = "[delays]\nd1 = { a = 0.8, b = 0.0, alpha = 0.0, omega = 0.0, varphi = 0.0 }\n";

#[test]
fn check_delay_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = hpl(dir.path(), &["check-delay", FIG2, "--csv", "r.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("d1: valid") && stdout(&o).contains("d2: valid"));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("delay,pi0_star,pi1_star,pi2_star,pi3_star,valid,first_violation_time\n"));

    let bad = write(dir.path(), "bad.toml", "[delays]\nd1 = { a = 1.0, b = 0.0, alpha = 0.3, omega = 4.0, varphi = 0.0 }\n");
    let o = hpl(dir.path(), &["check-delay", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("VIOLATION"));

    let typo = write(dir.path(), "typo.toml", "[delays]\nd1 = { a = 1.0, b = 0.0, alpha = 0.0, omga = 1.0, varphi = 0.0 }\n");
    let o = hpl(dir.path(), &["check-delay", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("omga"), "{}", stderr(&o));

    let o = hpl(dir.path(), &["check-delay", "missing.toml"]);
    assert_eq!(o.status.code(), Some(4));
    let o = hpl(dir.path(), &["check-delay"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn horizon_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONSTANT);
    let c = cfg.to_str().unwrap();
    for m in ["oracle", "euler", "rk4", "windowed"] {
        let o = hpl(dir.path(), &["horizon", c, "--method", m, "--h", "0.01"]);
        assert_eq!(o.status.code(), Some(0), "{m}: {}", stderr(&o));
        let text = stdout(&o);
        assert!(text.starts_with("t,psi,residual\n"));
        let psi = csv_column(&text, 1);
        assert_eq!(psi.len(), 1201);
        assert!(psi.iter().all(|&p| (p - 0.8).abs() < 1e-12), "{m}");
    }

    let o = hpl(dir.path(), &["horizon", c, "--method", "fno"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--weights"));

    let arch = Architecture {
        resolution: 64,
        modes: 8,
        channels: 4,
        ..Architecture::default()
    };
    OperatorWeights::zeros(arch, 0.8).to_container().save(dir.path().join("w.nopc")).unwrap();
    let o = hpl(dir.path(), &["horizon", c, "--method", "fno", "--weights", "w.nopc"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let psi = csv_column(&stdout(&o), 1);
    assert_eq!(psi.len(), 64);
    assert!(psi.iter().all(|&p| (p - 0.8).abs() < 1e-12));

    fs::write(dir.path().join("junk.nopc"), b"nope").unwrap();
    let o = hpl(dir.path(), &["horizon", c, "--method", "fno", "--weights", "junk.nopc"]);
    assert_eq!(o.status.code(), Some(1));

    let o = hpl(dir.path(), &["horizon", FIG2, "--out", "h.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let res = csv_column(&fs::read_to_string(dir.path().join("h.csv")).unwrap(), 2);
    assert_eq!(res.len(), 12001);
    assert!(res.iter().all(|&r| r <= 1e-12));
}

#[test]
fn simulate_fig2() {
    let dir = tempfile::tempdir().unwrap();
    let o = hpl(dir.path(), &["simulate", FIG2, "--out", "trace.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let ratio: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("gamma_ratio = "))
        .expect("ratio line")
        .parse()
        .unwrap();
    assert!(ratio < 1e-3, "{text}");
    assert!(text.contains("M_fit = ") && text.contains("C_fit = "));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,Z_1,Z_2,xi_1,xi_2,Zhat_1,Zhat_2,Phat_1,Phat_2,U_1,Y_1,psi_hat,gamma\n"));
    assert_eq!(trace.lines().count(), 12002);
}

#[test]
fn simulate_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let fig2 = fs::read_to_string(FIG2).unwrap();
    let unstable = write(dir.path(), "u.toml", &fig2.replace("K = [[-4.0, -4.0]]", "K = [[0.0, 0.0]]"));
    let o = hpl(dir.path(), &["simulate", unstable.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let blowup = write(dir.path(), "b.toml", &fig2.replace("T = 12.0", "T = 12.0\nnoise_std = 0.0").replace("window_H = 1.0", "window_H = 1.0\neps = 0.3"));
    let o = hpl(dir.path(), &["simulate", blowup.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn gen_dataset_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.nopc", "b.nopc"] {
        let o = hpl(dir.path(), &["gen-dataset", "--n", "8", "--seed", "0", "--resolution", "129", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a.nopc")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.nopc")).unwrap());
    assert_eq!(&a[..4], b"NOPC");
    let o = hpl(dir.path(), &["--threads", "1", "gen-dataset", "--n", "8", "--seed", "0", "--resolution", "129", "--out", "c.nopc"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(a, fs::read(dir.path().join("c.nopc")).unwrap());
    let o = hpl(dir.path(), &["gen-dataset", "--n", "8"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn margins_report_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = hpl(dir.path(), &["margins", FIG2, "--out", "m.txt", "--csv", "m.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("m.txt")).unwrap();
    assert!(text.starts_with("# stability margins\nstatus: "));
    assert!(text.contains("Omega2 = ") && text.contains("eps_star = "));
    let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(csv.starts_with("eps,c1,c2,c3,c4\n"));
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn bench_table_and_thread_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = hpl(dir.path(), &["bench", "--n", "3", "--methods", "euler,rk4", "--out", "b.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,n,mean_ms,p50_ms,p95_ms,mean_residual"));
    assert!(lines.next().unwrap().starts_with("euler,3,"));
    assert!(lines.next().unwrap().starts_with("rk4,3,"));

    let o = Command::new(env!("CARGO_BIN_EXE_hpl"))
        .args(["bench", "--n", "3"])
        .current_dir(dir.path())
        .env("HPL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("HPL_THREADS"));
}
