use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flatten(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatten")).args(args).env("FLATTEN_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = flatten(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn conformality(tsv: &str) -> f64 {
    let mut lines = tsv.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let values: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let col = header.iter().position(|h| *h == "conformality").unwrap();
    values[col].parse().unwrap()
}

const TINY: [&str; 7] = ["--hidden", "8", "--latent", "8", "--points", "64", "--no-early-stop"];

#[test]
fn training_twice_gives_identical_histories() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("sphere.obj");
    ok(&["generate", "--shape", "sphere", "--resolution", "2", "--output", s(&mesh)]);
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let mut args = vec!["train", "--input", s(&mesh), "--output", s(&out), "--iters", "5", "--seed", "3"];
        args.extend(TINY);
        ok(&args);
    }
    let a = fs::read(dir.path().join("a/loss_history.tsv")).unwrap();
    let b = fs::read(dir.path().join("b/loss_history.tsv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 6);
    assert_eq!(fs::read(dir.path().join("a/uv_raw.txt")).unwrap(), fs::read(dir.path().join("b/uv_raw.txt")).unwrap());
}

#[test]
fn flat_mesh_with_similar_uv_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.obj");
    let mut obj = String::new();
    let (c, sn) = (0.6f64, 0.8f64);
    for j in 0..4 {
        for i in 0..4 {
            let (x, y) = (i as f64, j as f64 + 0.3 * i as f64);
            obj += &format!("v {x} {y} 0\n");
            obj += &format!("vt {} {}\n", 2.5 * (c * x - sn * y) + 1.0, 2.5 * (sn * x + c * y) - 4.0);
        }
    }
    for j in 0..3 {
        for i in 0..3 {
            let a = j * 4 + i + 1;
            obj += &format!("f {0}/{0} {1}/{1} {2}/{2}\n", a, a + 1, a + 5);
            obj += &format!("f {0}/{0} {1}/{1} {2}/{2}\n", a, a + 5, a + 4);
        }
    }
    fs::write(&path, obj).unwrap();
    let tsv = ok(&["metrics", "--input", s(&path)]);
    assert!(conformality(&tsv) < 1e-12, "{tsv}");
    let json: serde_json::Value = serde_json::from_str(&ok(&["metrics", "--input", s(&path), "--json"])).unwrap();
    assert_eq!(json["overlapping_pairs"], 0);
}

#[test]
fn no_cut_net_scores_worse_on_a_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("sphere.obj");
    ok(&["generate", "--shape", "sphere", "--resolution", "3", "--output", s(&mesh)]);
    let run = |mode: &str| {
        let out = dir.path().join(mode);
        let args = [
            "ablate", "--mode", mode, "--input", s(&mesh), "--output", s(&out), "--iters", "3000", "--hidden", "64",
            "--latent", "32", "--points", "256", "--no-early-stop",
        ];
        conformality(&ok(&args))
    };
    let (full, no_cut) = (run("full"), run("no-cut-net"));
    assert!(no_cut > full, "no-cut-net {no_cut} vs full {full}");
}

#[test]
fn render_and_unwrap_use_training_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("plane.obj");
    ok(&["generate", "--shape", "plane", "--resolution", "10", "--output", s(&mesh)]);
    let out = dir.path().join("run");
    let mut args = vec!["train", "--input", s(&mesh), "--output", s(&out), "--iters", "3"];
    args.extend(TINY);
    ok(&args);

    let png = dir.path().join("layout.png");
    let svg = dir.path().join("layout.svg");
    let uv_obj = out.join("uv.obj");
    let seams = out.join("seams.txt");
    ok(&["render", "--input", s(&uv_obj), "--output", s(&png), "--image-size", "128", "--seams", s(&seams)]);
    ok(&["render", "--input", s(&uv_obj), "--output", s(&svg)]);
    assert_eq!(&fs::read(&png).unwrap()[1..4], b"PNG");
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let again = dir.path().join("again");
    ok(&["unwrap", "--checkpoint", s(&out.join("model.ckpt")), "--input", s(&mesh), "--output", s(&again)]);
    assert_eq!(fs::read(again.join("uv_raw.txt")).unwrap(), fs::read(out.join("uv_raw.txt")).unwrap());
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.obj");
    let out = flatten(&["train", "--input", s(&missing), "--output", s(dir.path())]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let bad = dir.path().join("bad.obj");
    fs::write(&bad, "v 0 0 0\nf 1 2 3\n").unwrap();
    assert!(!flatten(&["metrics", "--input", s(&bad)]).status.success());
    assert!(!flatten(&["train"]).status.success());
    let out = flatten(&["train", "--input", s(&bad), "--points", "10"]);
    assert!(!out.status.success());
}

#[test]
fn help_documents_every_subcommand() {
    let help = ok(&["--help"]);
    for c in ["train", "ablate", "noise", "unwrap", "metrics", "render", "generate"] {
        assert!(help.contains(c), "{c}");
    }
    assert!(ok(&["train", "--help"]).contains("--no-early-stop"));
}
