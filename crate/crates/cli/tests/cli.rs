//! End-to-end runs of the `spconv` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spconv::io::{load, save, KernelFile};
use spconv::random::random_tt_kernel;
use spconv::tt::{orthogonalize, tt_reconstruct};
use tempfile::TempDir;

fn spconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spconv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = spconv(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    spconv(args).status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn values(csv: &str) -> Vec<f64> {
    csv.lines().map(|l| l.parse().unwrap()).collect()
}

#[test]
fn identity_spectrum_is_sixteen_ones() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "id.spck");
    ok(&["gen", "identity", "--c-in", "1", "--n", "4", "--out", s(&f)]);
    let out = ok(&["spectrum", s(&f)]);
    assert_eq!(out, "1.0\n".repeat(16));
}

#[test]
fn zero_kernel_spectrum_is_zero() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "z.spck");
    ok(&[
        "gen",
        "zero",
        "--k",
        "3",
        "--c-in",
        "2",
        "--c-out",
        "2",
        "--n",
        "4",
        "--out",
        s(&f),
    ]);
    let v = values(&ok(&["spectrum", s(&f)]));
    assert_eq!(v.len(), 32);
    assert!(v.iter().all(|&x| x == 0.0));
}

#[test]
fn grouped_output_has_frequency_columns() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "r.spck");
    ok(&[
        "gen",
        "random",
        "--c-in",
        "2",
        "--c-out",
        "3",
        "--s",
        "2",
        "--n",
        "4",
        "--out",
        s(&f),
    ]);
    let out = ok(&["spectrum", s(&f), "--grouped"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("p1,p2,value"));
    let rows: Vec<&str> = lines.collect();
    // 2x2 frequencies, min(4 * 2, 3) values each
    assert_eq!(rows.len(), 12);
    assert!(rows[0].starts_with("0,0,"));
}

#[test]
fn tt_file_matches_its_reconstruction() {
    let dir = TempDir::new().unwrap();
    let tt = orthogonalize(&random_tt_kernel(3, 4, 4, 2, 3, 1, 4, 3).unwrap())
        .unwrap()
        .tt;
    let (tt_path, full_path) = (path(&dir, "tt.spck"), path(&dir, "full.spck"));
    save(&KernelFile::Full(tt_reconstruct(&tt).unwrap()), &full_path).unwrap();
    save(&KernelFile::Tt(tt), &tt_path).unwrap();
    let a = values(&ok(&["spectrum", s(&tt_path)]));
    let b = values(&ok(&["spectrum", s(&full_path)]));
    assert_eq!(a.len(), 16 * 2);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-2));
    }
    assert!(b[a.len()..].iter().all(|&z| z < 1e-10));
}

#[test]
fn geometry_overrides_are_validated() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "r.spck");
    ok(&[
        "gen",
        "random",
        "--c-in",
        "2",
        "--c-out",
        "2",
        "--n",
        "8",
        "--out",
        s(&f),
    ]);
    assert_eq!(
        values(&ok(&["spectrum", s(&f), "--n", "4", "--s", "2"])).len(),
        4 * 2
    );
    assert_eq!(code(&["spectrum", s(&f), "--s", "3"]), 3);
    assert_eq!(code(&["spectrum", s(&f), "--n", "2"]), 3);
}

#[test]
fn malformed_files_exit_2() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "bad.spck");
    fs::write(&f, b"SPCK1\x01\x00short").unwrap();
    assert_eq!(code(&["spectrum", s(&f)]), 2);
    assert_eq!(code(&["spectrum", s(&path(&dir, "missing.spck"))]), 2);
    assert_eq!(code(&["spectrum"]), 2);
}

#[test]
fn clip_below_threshold_keeps_payload() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "id.spck");
    ok(&["gen", "identity", "--c-in", "3", "--n", "4", "--out", s(&f)]);
    let out = path(&dir, "clip");
    ok(&["clip", s(&f), "--delta", "2", "--out", s(&out)]);
    assert_eq!(
        fs::read(out.join("truncated.spck")).unwrap(),
        fs::read(&f).unwrap()
    );
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(
        report.lines().next(),
        Some("delta,every,sigma1_pre,sigma1_expanded,sigma1_truncated")
    );
    assert_eq!(report.lines().nth(1), Some("2.0,100,1.0,1.0,1.0"));
}

#[test]
fn clip_at_one_reports_unit_expanded_sigma() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "r.spck");
    ok(&[
        "gen",
        "random",
        "--c-in",
        "3",
        "--c-out",
        "3",
        "--n",
        "6",
        "--seed",
        "9",
        "--out",
        s(&f),
    ]);
    let out = path(&dir, "clip");
    ok(&["clip", s(&f), "--out", s(&out)]);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let row: Vec<f64> = report
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!(row[2] > 1.0);
    assert!((row[3] - 1.0).abs() < 1e-8);
    // the expanded kernel really has the clipped spectrum
    let expanded = values(&ok(&["spectrum", s(&out.join("expanded.spck"))]));
    assert!((expanded[0] - 1.0).abs() < 1e-8);
    match load(out.join("expanded.spck")).unwrap() {
        KernelFile::Full(k) => assert_eq!(k.k(), 6),
        KernelFile::Tt(_) => panic!("expected FULL"),
    }
}

#[test]
fn divide_halves_twice_identity() {
    let dir = TempDir::new().unwrap();
    let (two, one, out) = (
        path(&dir, "two.spck"),
        path(&dir, "one.spck"),
        path(&dir, "out.spck"),
    );
    ok(&[
        "gen",
        "identity",
        "--c-in",
        "2",
        "--n",
        "4",
        "--scale",
        "2",
        "--out",
        s(&two),
    ]);
    ok(&[
        "gen",
        "identity",
        "--c-in",
        "2",
        "--n",
        "4",
        "--out",
        s(&one),
    ]);
    ok(&["divide", s(&two), "--target", "1", "--out", s(&out)]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&one).unwrap());
}

#[test]
fn divide_with_many_iterations_hits_target() {
    let dir = TempDir::new().unwrap();
    let (f, out) = (path(&dir, "r.spck"), path(&dir, "d.spck"));
    ok(&[
        "gen",
        "random",
        "--c-in",
        "4",
        "--c-out",
        "4",
        "--n",
        "8",
        "--seed",
        "2",
        "--out",
        s(&f),
    ]);
    ok(&[
        "divide",
        s(&f),
        "--target",
        "1",
        "--iters",
        "200",
        "--out",
        s(&out),
    ]);
    let top = values(&ok(&["spectrum", s(&out)]))[0];
    assert!((0.99..=1.01).contains(&top), "{top}");
    // one iteration still runs and writes a kernel
    ok(&["divide", s(&f), "--target", "1", "--out", s(&out)]);
}

#[test]
fn divide_zero_kernel_exits_4() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "z.spck");
    ok(&[
        "gen",
        "zero",
        "--c-in",
        "2",
        "--c-out",
        "2",
        "--n",
        "4",
        "--out",
        s(&f),
    ]);
    assert_eq!(
        code(&[
            "divide",
            s(&f),
            "--target",
            "1",
            "--out",
            s(&path(&dir, "o"))
        ]),
        4
    );
}

fn decompose(input: &Path, out: &Path, r1: &str, r2: &str, extra: &[&str]) -> Vec<f64> {
    let mut args = vec![
        "decompose",
        s(input),
        "--r1",
        r1,
        "--r2",
        r2,
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    let text = ok(&args);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("reconstruction_error,left_residual,right_residual")
    );
    lines
        .next()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect()
}

#[test]
fn decompose_reports_errors_and_residuals() {
    let dir = TempDir::new().unwrap();
    let (f, out) = (path(&dir, "r.spck"), path(&dir, "t.spck"));
    ok(&[
        "gen",
        "random",
        "--c-in",
        "3",
        "--c-out",
        "4",
        "--n",
        "4",
        "--out",
        s(&f),
    ]);
    assert!(decompose(&f, &out, "3", "4", &[])[0] < 1e-10);

    let low = path(&dir, "low.spck");
    let tt = random_tt_kernel(3, 4, 5, 2, 2, 1, 4, 8).unwrap();
    save(&KernelFile::Full(tt_reconstruct(&tt).unwrap()), &low).unwrap();
    let row = decompose(&low, &out, "2", "2", &["--orthogonalize"]);
    assert!(row[0] < 1e-9);
    assert!(row[1] < 1e-12 && row[2] < 1e-12);
    assert!(matches!(load(&out).unwrap(), KernelFile::Tt(t) if t.r1() == 2 && t.r2() == 2));

    assert_eq!(
        code(&[
            "decompose",
            s(&f),
            "--r1",
            "4",
            "--r2",
            "1",
            "--out",
            s(&out)
        ]),
        3
    );
    assert_eq!(
        code(&[
            "decompose",
            s(&f),
            "--r1",
            "0",
            "--r2",
            "1",
            "--out",
            s(&out)
        ]),
        3
    );
}

#[test]
fn verify_small_grid_passes_and_is_deterministic() {
    let first = spconv(&["verify", "--grid", "small", "--seed", "5"]);
    assert_eq!(first.status.code(), Some(0));
    let second = spconv(&["--threads", "1", "verify", "--seed", "5"]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("case_id,max_rel_deviation"));
    for line in text.lines().skip(1) {
        let dev: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(dev < 1e-8, "{line}");
    }
}

#[test]
fn verify_with_corruption_exits_1() {
    let out = spconv(&["verify", "--inject-corruption"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("worst"));
}

#[test]
fn thread_env_var_is_honoured() {
    let out = Command::new(env!("CARGO_BIN_EXE_spconv"))
        .args(["verify", "--seed", "5"])
        .env("SPCONV_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, spconv(&["verify", "--seed", "5"]).stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_spconv"))
        .args(["verify"])
        .env("SPCONV_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bench_reports_ratios() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "bench.csv");
    ok(&[
        "bench",
        "--n",
        "8",
        "--c-list",
        "6",
        "--r-list",
        "c/2,c/3",
        "--reps",
        "1",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows[0][0], "method");
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1][0], "full");
    let ratio: f64 = rows[2][11].parse().unwrap();
    assert_eq!(ratio, (64.0 * 36.0) / (6.0 * 3.0 * 2.0 + 64.0 * 9.0));
    assert_eq!(
        code(&["bench", "--c-list", "2", "--r-list", "c/3", "--reps", "1", "--n", "4"]),
        3
    );
}

#[test]
fn lipschitz_stays_below_sigma1() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "r.spck");
    ok(&[
        "gen",
        "random",
        "--c-in",
        "2",
        "--c-out",
        "2",
        "--n",
        "6",
        "--out",
        s(&f),
    ]);
    let text = ok(&["lipschitz", s(&f), "--probes", "200"]);
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!(row[1] <= row[2] + 1e-10);
}
