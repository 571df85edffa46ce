use std::process::{Command, Output};

fn stbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stbc"))
        .args(args)
        .output()
        .expect("run stbc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tmp(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("stbc-cli-{}-{name}", std::process::id()))
}

#[test]
fn verify_exit_codes() {
    let ok = stbc(&["verify", "--code", "proposed", "--trials", "1000"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("result=PASS"));

    let bad = stbc(&[
        "verify",
        "--code",
        "djabba",
        "--pattern",
        "proposed",
        "--trials",
        "20",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let text = stdout(&bad);
    assert!(text.contains("sparsity.max_violation="));
    assert!(text.contains("failed=sparsity"));

    assert_eq!(stbc(&["verify", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(stbc(&["verify", "--code", "golden"]).status.code(), Some(2));
    assert_eq!(stbc(&["verify", "--unknown"]).status.code(), Some(2));
    assert_eq!(
        stbc(&["verify", "--code", "djabba", "--trials", "20"])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn budgets_are_refused() {
    let o = stbc(&["mindet", "--code", "proposed", "--qam", "16"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));

    let o = stbc(&[
        "ber",
        "--code",
        "proposed",
        "--decoder",
        "exhaustive",
        "--qam",
        "16",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));

    let o = stbc(&[
        "ber",
        "--code",
        "djabba",
        "--decoder",
        "fast",
        "--snr",
        "10",
        "--max-frames",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn angles_require_units() {
    assert_eq!(
        stbc(&["mindet", "--rho", "0.5", "--single-symbol"])
            .status
            .code(),
        Some(2)
    );
    let o = stbc(&[
        "mindet",
        "--code",
        "proposed",
        "--rho",
        "atan:1.618033988749895",
        "--single-symbol",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("min_det=10.2"));
}

#[test]
fn ber_grid_and_determinism() {
    let (a, b) = (tmp("a.csv"), tmp("b.csv"));
    let run = |path: &std::path::Path| {
        stbc(&[
            "ber",
            "--code",
            "proposed",
            "--decoder",
            "fast",
            "--qam",
            "4",
            "--snr",
            "0:2:16",
            "--seed",
            "7",
            "--max-frames",
            "300",
            "--workers",
            "1",
            "--out",
            path.to_str().unwrap(),
        ])
    };
    assert_eq!(run(&a).status.code(), Some(0));
    assert_eq!(run(&b).status.code(), Some(0));
    let (ta, tb) = (
        std::fs::read_to_string(&a).unwrap(),
        std::fs::read_to_string(&b).unwrap(),
    );
    std::fs::remove_file(&a).unwrap();
    std::fs::remove_file(&b).unwrap();
    assert_eq!(ta, tb);
    let lines: Vec<_> = ta.lines().collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(
        lines[0],
        "code,decoder,constellation,snr_db,frames,bits,bit_errors,ber,wall_seconds,mean_leaf_visits,seed,snr_convention"
    );
    assert!(lines[1].starts_with("proposed,fast,4qam,0.0,"));
}

#[test]
fn config_file_defaults_and_overrides() {
    let cfg = tmp("run.cfg");
    std::fs::write(
        &cfg,
        "# quick run\ncode=djabba\ndecoder=sphere\nsnr=4\nmax_frames=256\nseed=3\n",
    )
    .unwrap();
    let o = stbc(&["ber", "--config", cfg.to_str().unwrap(), "--snr", "6"]);
    let missing = stbc(&["ber", "--config", "/nonexistent/stbc.cfg"]);
    std::fs::write(&cfg, "bogus_flag=1\n").unwrap();
    let bad = stbc(&["ber", "--config", cfg.to_str().unwrap()]);
    std::fs::remove_file(&cfg).unwrap();

    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("djabba,sphere,4qam,6.0,256,"), "{row}");
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_angle_csv() {
    let o = stbc(&["sweep-angle", "--code", "proposed", "--deg", "58:1:58"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("code,constellation,rho_rad,rho_deg,min_det,candidates_scanned")
    );
    assert_eq!(lines.count(), 1);
    assert_eq!(
        stbc(&["sweep-angle", "--deg", "0:10:90"]).status.code(),
        Some(2)
    );
}

#[test]
fn bench_reports_counts() {
    let o = stbc(&["bench", "--qam", "4", "--instances", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("exhaustive_leaf_count=65536"));
    assert!(text.contains("fast_leaf_count_predicted=2048"));
    assert!(text.contains("sphere_above_exhaustive=0"));
    let measured = text
        .lines()
        .find_map(|l| l.strip_prefix("fast_over_exhaustive_measured="))
        .unwrap();
    assert_eq!(measured.parse::<f64>().unwrap(), 1.0 / 32.0);
}
