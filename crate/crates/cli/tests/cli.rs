use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use psr_gmti::formats;

fn psr_gmti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psr-gmti"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const TINY: &str = r#"
seed = 1

[geometry]
extent_m = [40.0, 40.0]
pixels = [9, 9]
velocity_min_mps = [-12.0, -12.0]
velocity_max_mps = [12.0, 12.0]
velocity_samples = [5, 5]
n_slow = 64
n_freq = 32

[scene]
kind = "toy"

[sweep]
variable = "snr"
values = [10.0]
realizations = 1

[solver]
name = "pgd"
max_iters = 20
"#;

#[test]
fn run_writes_metrics_and_images() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let out = tmp.path().join("out");
    let res = psr_gmti(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--solver",
        "fista",
        "--seed",
        "9",
        "--lambda",
        "0.1",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.starts_with("sweep_var,value_db,ssim,ppv,l2_error,tp,fp,fn\nsnr,10,"));
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap(), stdout);
    let echo = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("seed = 9"));
    assert!(echo.contains("name = \"fista\""));
    assert!(echo.contains("lambda = 0.1"));
    let pgm = fs::read(out.join("runs/snr000_r00_moving.pgm")).unwrap();
    let (w, h, _) = formats::parse_pgm(&pgm).unwrap();
    assert_eq!((w, h), (9, 9));
}

#[test]
fn run_rejects_a_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "[sweep]\nrealizations = 0\n").unwrap();
    let res = psr_gmti(&["run", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(!res.stderr.is_empty());

    fs::write(&cfg, "[solver]\nlamda = 0.3\n").unwrap();
    let res = psr_gmti(&["run", cfg.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("lamda"));
}

#[test]
fn bench_prints_timings_and_slopes() {
    let res = psr_gmti(&["bench", "9x400,9x1600,9x3600", "--iters", "3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = String::from_utf8(res.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "solver,m,n,mn,median_iteration_ms");
    assert_eq!(lines.iter().filter(|l| !l.starts_with('#')).count(), 1 + 9);
    for solver in ["pgd", "admm", "nonconvex"] {
        assert!(lines.iter().any(|l| l.starts_with(&format!("# {solver} slope"))));
    }
    assert!(!psr_gmti(&["bench", "9x400,9x800"]).status.success());
}

fn render_to(input: &Path, extra: &[&str]) -> (usize, usize, Vec<u8>) {
    let out = input.with_extension("out.pgm");
    let mut args = vec!["render", input.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let res = psr_gmti(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    formats::parse_pgm(&fs::read(&out).unwrap()).unwrap()
}

#[test]
fn render_views() {
    let tmp = tempfile::tempdir().unwrap();
    // 3 velocities x 4 pixels, stationary row in the middle
    let q = ndarray::array![[0.0, 0.1, 0.0, 0.0], [0.5, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let csv = tmp.path().join("q.csv");
    formats::write_matrix_csv(&csv, &q).unwrap();
    let bin = tmp.path().join("q.psrd");
    formats::write_matrix_binary(&bin, &q).unwrap();

    let (w, h, px) = render_to(&csv, &[]);
    assert_eq!((w, h), (4, 3));
    assert_eq!(px[11], 255);
    assert_eq!(px[1], 128);
    assert_eq!(render_to(&bin, &[]), (w, h, px));

    let (w, h, px) = render_to(&csv, &["--view", "moving"]);
    assert_eq!((w, h), (2, 2));
    assert_eq!(px, vec![0, 128, 0, 255]);
    let (_, _, px) = render_to(&csv, &["--view", "stationary", "--nx", "4"]);
    assert_eq!(px, vec![255, 0, 0, 0]);

    let res = psr_gmti(&["render", csv.to_str().unwrap(), "--view", "moving", "--nx", "3"]);
    assert!(!res.status.success());
}
