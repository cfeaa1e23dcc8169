use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn marginkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marginkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = marginkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the single stderr line of a failing call.
fn fails(args: &[&str]) -> (i32, String) {
    let out = marginkit(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    (out.status.code().unwrap(), err.trim_end().to_string())
}

const SPEC: &str = "seed = 4\n[shape]\nkind = \"blobs\"\ncenters = [[0.0, 3.0], [3.0, -2.0], [-3.0, -2.0]]\nn_per_class = 40\nsigma = 0.8\n";

fn experiment(mode: &str, steps: u64) -> String {
    format!(
        r#"[data]
train_fraction = 0.75
[data.source]
kind = "csv"
path = "blobs.csv"
has_header = true

[train]
seed = 2
total_steps = {steps}
eval_every = 10
lr_base = 0.1
lr_drop_steps = [{half}]
momentum = 0.5
target_accuracy = 0.9
alpha = {{ kind = "linear", start = 1e-5, end = 1e-3, total_steps = {steps} }}
hidden = [{{ width = 8, activation = "relu" }}]
[train.objective]
risk = "hinge"
reg = {{ kind = "pmm" }}
[train.selection]
mode = "{mode}"
big_batch = 30
small_batch = 6
"#,
        half = steps / 2
    )
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("spec.toml"), SPEC).unwrap();
        ok(&["gen-data", "--spec", s(&root.join("spec.toml")), "--out", s(&root.join("blobs.csv")), "--header"]);
        fs::write(root.join("mms.toml"), experiment("mms", 60)).unwrap();
        fs::write(root.join("random.toml"), experiment("random", 60)).unwrap();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> String {
        s(&self.root.join(name)).to_string()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_writes_the_requested_samples() {
    let ws = Workspace::new();
    let text = fs::read_to_string(ws.path("blobs.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,label"));
    assert_eq!(lines.count(), 120);

    let again = ws.path("again.csv");
    ok(&["gen-data", "--spec", &ws.path("spec.toml"), "--out", &again, "--header"]);
    assert_eq!(fs::read(&again).unwrap(), text.as_bytes());
}

#[test]
fn paused_and_resumed_training_matches_one_call() {
    let ws = Workspace::new();
    for mode in ["mms", "random"] {
        let cfg = ws.path(&format!("{mode}.toml"));
        let (full, split) = (ws.path(&format!("{mode}-full")), ws.path(&format!("{mode}-split")));
        let out = ok(&["train", "--config", &cfg, "--out-dir", &full]);
        assert!(out.starts_with("finished at step 60"), "{out}");

        let out = ok(&["train", "--config", &cfg, "--out-dir", &split, "--until", "25"]);
        assert!(out.starts_with("paused at step 25"), "{out}");
        let ck = format!("{split}/checkpoint.bin");
        ok(&["train", "--config", &cfg, "--out-dir", &split, "--resume", &ck]);

        for file in ["metrics.csv", "checkpoint.bin", "summary.toml"] {
            let a = fs::read(format!("{full}/{file}")).unwrap();
            let b = fs::read(format!("{split}/{file}")).unwrap();
            assert!(a == b, "{mode}: {file} differs");
        }
        let summary = fs::read_to_string(format!("{full}/summary.toml")).unwrap();
        assert!(summary.contains(&format!("run_id = \"{mode}\"")));
        assert!(summary.contains("final_step = 60"));
    }
}

#[test]
fn eval_and_embed_use_the_stored_input_map() {
    let ws = Workspace::new();
    let dir = ws.path("run");
    ok(&["train", "--config", &ws.path("mms.toml"), "--out-dir", &dir]);
    let ck = format!("{dir}/checkpoint.bin");

    let out = ok(&["eval", "--checkpoint", &ck, "--data", &ws.path("blobs.csv"), "--header"]);
    let field = |name: &str| -> f64 {
        out.lines()
            .find_map(|l| l.strip_prefix(&format!("{name} ")))
            .unwrap_or_else(|| panic!("{name} missing in {out}"))
            .parse()
            .unwrap()
    };
    assert_eq!(field("samples"), 120.0);
    assert!(field("accuracy") > 0.9, "{out}");
    let confusion: Vec<Vec<usize>> = out
        .lines()
        .skip_while(|l| !l.starts_with("confusion"))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(confusion.len(), 3);
    assert_eq!(confusion.iter().flatten().sum::<usize>(), 120);
    let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
    assert!((correct as f64 / 120.0 - field("accuracy")).abs() < 1e-12);

    let emb = ws.path("emb.csv");
    ok(&["embed", "--checkpoint", &ck, "--data", &ws.path("blobs.csv"), "--header", "--out", &emb]);
    let text = fs::read_to_string(&emb).unwrap();
    assert!(text.starts_with("f0,f1,f2,f3,f4,f5,f6,f7,label,predicted\n"));
    assert_eq!(text.lines().count(), 121);
}

#[test]
fn eval_reads_idx_pairs() {
    let ws = Workspace::new();
    let (images, labels) = (ws.path("img.idx"), ws.path("lbl.idx"));
    let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2];
    img.extend_from_slice(&[0, 255, 255, 0]);
    fs::write(&images, img).unwrap();
    fs::write(&labels, [0, 0, 8, 1, 0, 0, 0, 2, 0, 2]).unwrap();
    let dir = ws.path("run");
    ok(&["train", "--config", &ws.path("mms.toml"), "--out-dir", &dir]);
    let out = ok(&["eval", "--checkpoint", &format!("{dir}/checkpoint.bin"), "--data", &images, &labels]);
    assert!(out.contains("samples 2"), "{out}");
}

#[test]
fn compare_writes_one_row_per_seed() {
    let ws = Workspace::new();
    let out_csv = ws.path("cmp.csv");
    let out = ok(&[
        "compare", "--config-a", &ws.path("mms.toml"), "--config-b", &ws.path("random.toml"), "--seeds", "3", "--out", &out_csv,
    ]);
    assert_eq!(out.lines().count(), 3, "{out}");
    let text = fs::read_to_string(&out_csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    let seeds: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seeds, ["2", "3", "4"]);
}

#[test]
fn failures_report_one_categorized_line() {
    let ws = Workspace::new();
    let (code, err) = fails(&["train", "--config", &ws.path("missing.toml"), "--out-dir", &ws.path("o")]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error: io: "), "{err}");

    fs::write(ws.path("bad.toml"), experiment("mms", 60) + "epochs = 3\n").unwrap();
    let (_, err) = fails(&["train", "--config", &ws.path("bad.toml"), "--out-dir", &ws.path("o")]);
    assert!(err.starts_with("error: config: "), "{err}");

    fs::write(ws.path("drops.toml"), experiment("mms", 60).replace("[30]", "[90]")).unwrap();
    let (_, err) = fails(&["train", "--config", &ws.path("drops.toml"), "--out-dir", &ws.path("o")]);
    assert!(err.starts_with("error: config: "), "{err}");

    let dir = ws.path("run");
    ok(&["train", "--config", &ws.path("mms.toml"), "--out-dir", &dir, "--until", "10"]);
    let ck = format!("{dir}/checkpoint.bin");
    let (_, err) = fails(&["train", "--config", &ws.path("random.toml"), "--out-dir", &dir, "--resume", &ck]);
    assert!(err.starts_with("error: config: "), "{err}");

    let mut bytes = fs::read(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    let bad_ck = ws.path("bad.bin");
    fs::write(&bad_ck, bytes).unwrap();
    let (_, err) = fails(&["eval", "--checkpoint", &bad_ck, "--data", &ws.path("blobs.csv"), "--header"]);
    assert!(err.starts_with("error: checkpoint: "), "{err}");

    let (_, err) = fails(&["eval", "--checkpoint", &ck, "--data", &ws.path("blobs.csv")]);
    assert!(err.starts_with("error: parse: "), "{err}");

    let (code, err) = fails(&["eval", "--checkpoint", &ck]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error: usage: ") && err.contains("--data"), "{err}");
}
