use std::path::Path;
use std::process::Command;

fn dpstream(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dpstream"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const COUNTING: &str =
    "mechanism = \"counting\"\nT = 16\nseeds = 3\n[stream]\nkind = \"bernoulli\"\nd = 1\n";

#[test]
fn run_writes_csv_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", COUNTING);
    let out = dir.path().join("out.csv");
    let o = dpstream(&[
        "run",
        "--config",
        &cfg,
        "--noise",
        "off",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "run_id",
            "seed",
            "t",
            "mechanism",
            "exact",
            "released",
            "bound",
            "violated",
            "conditioned"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 16);
    for r in &rows {
        assert_eq!(&r[4], &r[5]);
        assert_eq!(&r[7], "false");
    }
}

#[test]
fn seed_override_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", COUNTING);
    let a = dpstream(&["run", "--config", &cfg, "--seed", "42"]);
    let b = dpstream(&["run", "--config", &cfg, "--seed", "42", "--sequential"]);
    let c = dpstream(&["run", "--config", &cfg, "--seed", "43"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert!(String::from_utf8_lossy(&a.stdout)
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0,42,"));
}

#[test]
fn malformed_config_exits_2_without_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    for (i, text) in [
        "mechanism = \"counting\"\nT = 16\n",
        "mechanism = \"teleport\"\nT = 16\n[stream]\nkind = \"bernoulli\"\nd = 1\n",
        "mechanism = \"counting\"\nT = 16\n[stream]\nkind = \"bernoulli\"\nd = 2\n",
        "not toml at all",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), text);
        let o = dpstream(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!out.exists());
    }
    let o = dpstream(&["run", "--config", "/nonexistent.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_acceptance_exits_1() {
    // an update budget of 1 is exceeded by the second insertion, and the abort counts as a violation
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "mechanism = \"cardinality\"\nnoise = \"off\"\nT = 50\n[stream]\nkind = \"adversarial\"\npattern = \"growing\"\nd = 50\n[params]\nk_budget = 1\ns = 1\n",
    );
    let o = dpstream(&["run", "--config", &cfg]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn gen_stream_round_trips_through_file_streams() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.toml",
        "mechanism = \"cardinality\"\nT = 100\nseed = 5\n[stream]\nkind = \"random_set_ops\"\nd = 30\nbudget = 100\n[params]\nk_budget = 100\n",
    );
    let stream = dir.path().join("s.txt");
    let o = dpstream(&[
        "gen-stream",
        "--config",
        &cfg,
        "--out",
        stream.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&stream).unwrap();
    assert!(text.lines().all(|l| l.contains(';')));
    let file_cfg = write(
        dir.path(),
        "f.toml",
        &format!(
            "mechanism = \"cardinality\"\nT = 100\nseed = 5\nnoise = \"off\"\n[stream]\nkind = \"file\"\npath = \"{}\"\n[params]\nk_budget = 100\n",
            stream.display()
        ),
    );
    let o = dpstream(&["run", "--config", &file_cfg]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
