use std::path::Path;
use std::process::{Command, Output};

use bandsplit::pzt::{load_tensor, save_tensor};
use bandsplit::{SeededRng, Tensor};

fn bandsplit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bandsplit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn random_grid(path: &Path) -> Tensor {
    let mut rng = SeededRng::new(7);
    let t = Tensor::from_f64(vec![1, 2, 12, 10], (0..240).map(|_| rng.standard_normal()).collect()).unwrap();
    save_tensor(&t, path).unwrap();
    t
}

#[test]
fn decompose_recompose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let z = random_grid(&dir.path().join("z.pzt"));
    let out = bandsplit(&["decompose", "--input", "z.pzt", "--bands", "5", "--out", "bands"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("bands/band_04.pzt").is_file());
    let out = bandsplit(&["recompose", "--in", "bands", "--output", "back.pzt"], dir.path());
    assert!(out.status.success());
    let back = load_tensor(dir.path().join("back.pzt")).unwrap();
    assert!(back.max_abs_diff(&z).unwrap() < 1e-12);
}

#[test]
fn energy_csv_sums_to_one() {
    let dir = tempfile::tempdir().unwrap();
    random_grid(&dir.path().join("z.pzt"));
    let out = bandsplit(&["energy", "--input", "z.pzt", "--bands", "3"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("band_index,edge_lo,edge_hi,energy_fraction"));
    let total: f64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bandsplit(&["decompose"], dir.path()).status.code(), Some(1));
    assert_eq!(bandsplit(&["--help"], dir.path()).status.code(), Some(0));
    let missing = bandsplit(&["decompose", "--input", "nope.pzt", "--out", "o"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.pzt"), b"PZT9garbage").unwrap();
    let bad = bandsplit(&["energy", "--input", "bad.pzt"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    random_grid(&dir.path().join("z.pzt"));
    let zero = bandsplit(&["decompose", "--input", "z.pzt", "--bands", "0", "--out", "o"], dir.path());
    assert_eq!(zero.status.code(), Some(1));
}
