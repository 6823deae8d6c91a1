use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reproguard"))
        .args(args)
        .env("REPROGUARD_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn encode_decode_roundtrip_and_failure_demo() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("in.ply");
    let rgd = dir.path().join("out.rgd");
    let back = dir.path().join("back.ply");

    let o = run(&["synth-pc", "--output", p(&ply), "--depth", "9", "--count", "20000", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["encode-pc", "--input", p(&ply), "--output", p(&rgd)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("bpp") && stdout(&o).contains("overhead"));

    for (e, seed) in [("0", "0"), ("5e-7", "1"), ("5e-7", "2")] {
        let o = run(&[
            "decode-pc", "--input", p(&rgd), "--output", p(&back), "--reference", p(&ply),
            "--perturb-e", e, "--perturb-seed", seed,
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("EXACT"), "{}", stdout(&o));
    }

    let o = run(&["encode-pc", "--input", p(&ply), "--output", p(&rgd), "--no-protect"]);
    assert!(o.status.success());
    let o = run(&[
        "decode-pc", "--input", p(&rgd), "--reference", p(&ply),
        "--perturb-e", "5e-7", "--perturb-dist", "adversarial",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    assert!(out.contains("DECODE MISMATCH") || out.contains("DECODE FAILURE"), "{out}");
}

#[test]
fn config_and_format_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("in.ply");
    let rgd = dir.path().join("out.rgd");
    assert!(run(&["synth-pc", "--output", p(&ply), "--depth", "5", "--count", "200"]).status.success());

    let o = run(&["encode-pc", "--input", p(&ply), "--output", p(&rgd), "--epsilon", "0.002", "--k", "250"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CONFIG REJECTED"));

    assert!(run(&["encode-pc", "--input", p(&ply), "--output", p(&rgd)]).status.success());
    let mut bytes = std::fs::read(&rgd).unwrap();
    bytes[0] = b'X';
    std::fs::write(&rgd, &bytes).unwrap();
    assert_eq!(run(&["decode-pc", "--input", p(&rgd)]).status.code(), Some(3));

    std::fs::write(&ply, "not a ply").unwrap();
    assert_eq!(run(&["encode-pc", "--input", p(&ply), "--output", p(&rgd)]).status.code(), Some(5));
    let missing = dir.path().join("missing.ply");
    assert_eq!(run(&["encode-pc", "--input", p(&missing), "--output", p(&rgd)]).status.code(), Some(1));
}

#[test]
fn sweep_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let svg = dir.path().join("sweep.svg");
    let o = run(&[
        "sweep", "--payload", "pc", "--ks", "250,125", "--seeds", "1,2", "--depth", "9", "--count", "30000",
        "--out", p(&csv), "--svg", p(&svg),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        reproguard::cli::CSV_HEADER.to_vec()
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 5 * 2);
    assert!(rows.iter().all(|r| &r[10] == "true"));
    // Rows come ordered by (q, epsilon, seed): the five epsilons for each (q, seed).
    for q in ["0.004", "0.008"] {
        for seed in ["1", "2"] {
            let ovh: Vec<f64> = rows
                .iter()
                .filter(|r| &r[3] == q && &r[5] == seed)
                .map(|r| r[8].parse().unwrap())
                .collect();
            assert_eq!(ovh.len(), 5);
            assert!(ovh.windows(2).all(|w| w[1] < w[0]), "q {q} seed {seed}: {ovh:?}");
        }
    }
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.contains("<polyline"));
    let plot = dir.path().join("again.svg");
    assert!(run(&["plot", "--csv", p(&csv), "--out", p(&plot)]).status.success());
    assert_eq!(std::fs::read_to_string(&plot).unwrap(), svg_text);
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    let o = run(&["sweep", "--seeds", "", "--out", p(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1);

    let o = run(&[
        "sweep", "--epsilons", "0.002,1e-6", "--ks", "250", "--seeds", "4", "--depth", "6", "--count", "500",
        "--out", p(&csv),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().any(|l| l.ends_with("skipped")));
    assert!(text.lines().any(|l| l.ends_with("true")));

    let o = run(&["sweep", "--payload", "image", "--epsilons", "1e-4,1e-5", "--seeds", "1", "--out", p(&csv)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn interop_reports() {
    let base = ["interop", "--payload", "pc", "--depth", "7", "--count", "2000", "--trials", "100", "--epsilon", "1e-6"];
    let o = run(&[&base[..], &["--e", "5e-7"]].concat());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("exact 100/100"), "{}", stdout(&o));

    let o = run(&[&base[..], &["--e", "0"]].concat());
    assert!(stdout(&o).contains("exact 100/100"));

    let o = run(&[
        "interop", "--payload", "pc", "--depth", "7", "--count", "2000", "--trials", "20", "--epsilon", "1e-7",
        "--e", "5e-7", "--dist", "adversarial",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("OUT OF CONTRACT"));

    let o = run(&["interop", "--payload", "image", "--trials", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("exact 4/4"));
}

#[test]
fn demo_image_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let rgd = dir.path().join("lat.rgd");
    let o = run(&["demo-image", "--perturb-e", "8e-6", "--perturb-seed", "3", "--output", p(&rgd)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("EXACT"));

    let o = run(&["inspect", "--input", p(&rgd)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("grid table 1"));

    let o = run(&["demo-image", "--no-protect", "--perturb-e", "8e-6", "--perturb-dist", "adversarial"]);
    assert_eq!(o.status.code(), Some(2));
}
