use std::path::Path;
use std::process::Command;

fn uwofdm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uwofdm"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn design_succeeds_and_writes_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = uwofdm()
        .args(["design", "--dump-matrices", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all invariants passed"));
    let names: Vec<String> = read_dir_sorted(dir.path()).into_iter().map(|(n, _)| n).collect();
    assert!(names.iter().any(|n| n.starts_with("g_prp_")));
    assert!(names.iter().any(|n| n.starts_with("y_")));
    let g = std::fs::read_to_string(dir.path().join(names.iter().find(|n| n.starts_with("g_prp_")).unwrap())).unwrap();
    // 52 x 36 entries plus the header
    assert_eq!(g.lines().filter(|l| !l.starts_with('#')).count(), 1 + 52 * 36);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "n_red = 12\n").unwrap();
    let out = uwofdm().args(["papr", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let out = uwofdm().args(["design", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = uwofdm().args(["ber", "--snr", "10:0:1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = uwofdm().args(["papr", "--scheme", "clipping"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "n_red = 20\nseed = 7\n").unwrap();
    let out = uwofdm()
        .args(["papr", "--symbols", "200", "--scheme", "prp", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files = read_dir_sorted(dir.path());
    let (_, csv) = files.iter().find(|(n, _)| n.starts_with("ccdf_prp_")).unwrap();
    let text = String::from_utf8_lossy(csv);
    assert!(text.contains("# seed=7"));
    assert!(text.contains("# n_r=20"));
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let runs: Vec<_> = ["1", "3"]
        .iter()
        .map(|w| {
            let dir = tempfile::tempdir().unwrap();
            for args in [
                vec!["papr", "--symbols", "300", "--scheme", "none,prp-slm", "--sweep", "nr=16,20"],
                vec!["ber", "--symbols", "300", "--scheme", "slm", "--snr", "0:10:5", "--hpa", "both"],
                vec!["psd", "--symbols", "20", "--scheme", "prp"],
            ] {
                let out = uwofdm()
                    .args(&args)
                    .args(["--workers", w, "--out"])
                    .arg(dir.path())
                    .output()
                    .unwrap();
                assert!(out.status.success());
            }
            let files = read_dir_sorted(dir.path());
            (dir, files)
        })
        .collect();
    assert_eq!(runs[0].1.len(), 2 * 2 + 2 + 2);
    assert_eq!(runs[0].1, runs[1].1);
}
