use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use panmix::cda::pseudo_embedding_bank;
use panmix::io::{encode_label_png, write_embedding_bank, write_volume_raw};
use panmix::{LabelMap2D, SeededRng};
use tempfile::TempDir;

const TINY: &[&str] = &[
    "--set", "height=16", "--set", "width=16", "--set", "shapes_max=3", "--set", "radius_max=3",
];

fn panmix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panmix"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = panmix(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(TINY);
    v
}

/// Source scenes plus a briefly trained teacher's exported target predictions.
fn fixture() -> TempDir {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &with_tiny(&["synth", "generate", "--domain", "source", "--count", "3", "--out", "src"]));
    ok(
        d,
        &with_tiny(&[
            "synth", "run", "--out", "run", "--set", "iterations=30", "--set", "epochs=1", "--set", "eval_scenes=2",
            "--export-target", "3",
        ]),
    );
    tmp
}

fn read_dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    out.sort();
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eval_on_identical_dirs_is_perfect() {
    let tmp = fixture();
    let d = tmp.path();
    let out = ok(
        d,
        &["--catalog", "lab", "eval", "--gt", "run/target", "--pred", "run/target", "--out", "report.json"],
    );
    assert!(out.contains("mPQ"));
    let r = json(&d.join("report.json"));
    assert_eq!(r["images"], 3);
    assert_eq!(r["pq"]["mpq"], 1.0);
    assert_eq!(r["miou"]["miou"], 1.0);
}

#[test]
fn mix_is_reproducible_and_independent_of_jobs() {
    let tmp = fixture();
    let d = tmp.path();
    let base = [
        "--catalog", "lab", "mix", "--source", "src/manifest.json", "--target", "run/target/manifest.json",
        "--mode", "imix", "--tau", "0.75", "--seed", "1",
    ];
    for (out, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let mut args = base.to_vec();
        args.extend(["--out", out, "--jobs", jobs]);
        ok(d, &args);
    }
    let a = read_dir_bytes(&d.join("a"));
    assert_eq!(a.len(), 3 * 4 + 1);
    assert_eq!(a, read_dir_bytes(&d.join("b")));
    assert_eq!(a, read_dir_bytes(&d.join("c")));

    let mut classmix = base.to_vec();
    classmix[8] = "classmix";
    classmix.extend(["--out", "cm"]);
    ok(d, &classmix);
    let report = json(&d.join("cm/mix_report.json"));
    assert_eq!(report["mode"], "classmix");
    assert_eq!(report["samples"].as_array().unwrap().len(), 3);
}

#[test]
fn missing_input_exits_two_with_path() {
    let tmp = TempDir::new().unwrap();
    let out = panmix(tmp.path(), &["pseudo", "--probs", "absent.prb", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.prb"));
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = panmix(d, &["eval", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(panmix(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(panmix(d, &["loss-check", "--trials", "0"]).status.code(), Some(1));
    assert_eq!(panmix(d, &["--jobs", "0", "synth", "generate", "--domain", "source", "--count", "1", "--out", "g"]).status.code(), Some(1));
    assert_eq!(panmix(d, &["synth", "run", "--out", "r", "--set", "nonsense=1"]).status.code(), Some(1));
    assert!(panmix(d, &["--help"]).status.success());
}

#[test]
fn manifest_domain_is_checked() {
    let tmp = fixture();
    let out = panmix(
        tmp.path(),
        &["--catalog", "lab", "mix", "--source", "run/target/manifest.json", "--target", "run/target/manifest.json", "--out", "m"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tagged"));
}

#[test]
fn convert_round_trips_through_json_lines() {
    let tmp = fixture();
    let d = tmp.path();
    ok(
        d,
        &[
            "--catalog", "lab", "convert", "panoptic-to-jsonl", "--panoptic", "src/scene_00001_panoptic.png",
            "--out", "x.jsonl", "--semantic-out", "x_sem.png",
        ],
    );
    ok(
        d,
        &[
            "--catalog", "lab", "convert", "jsonl-to-panoptic", "--instances", "x.jsonl", "--semantic", "x_sem.png",
            "--provenance", "ground-truth", "--out", "back.png",
        ],
    );
    assert_eq!(std::fs::read(d.join("back.png")).unwrap(), std::fs::read(d.join("src/scene_00001_panoptic.png")).unwrap());
    assert_eq!(std::fs::read(d.join("back.json")).unwrap(), std::fs::read(d.join("src/scene_00001_panoptic.json")).unwrap());
}

#[test]
fn pseudo_fuse_and_viz_write_outputs() {
    let tmp = fixture();
    let d = tmp.path();
    ok(
        d,
        &[
            "pseudo", "--probs", "run/target/scene_00000_probs.prb", "--instances",
            "run/target/scene_00000_instances.jsonl", "--tau", "0.0", "--out", "ps",
        ],
    );
    let r = json(&d.join("ps/pseudo.json"));
    assert_eq!(r["height"], 16);
    for f in ["pseudo_semantic.png", "pseudo_confidence.prb", "pseudo_instances.jsonl"] {
        assert!(d.join("ps").join(f).is_file(), "{f}");
    }
    ok(
        d,
        &[
            "--catalog", "lab", "fuse", "--sem", "run/target/scene_00000_probs.prb", "--inst",
            "run/target/scene_00000_instances.jsonl", "--score-floor", "0", "--out", "fused/p.png",
        ],
    );
    assert!(d.join("fused/p.json").is_file());
    ok(d, &["--catalog", "lab", "viz", "--image", "run/target/scene_00000.png", "--panoptic", "fused/p.png", "--out", "v.png"]);
    assert!(d.join("v.png").is_file());
}

#[test]
fn cda_reports_loss_and_similarity_volume() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let (h, w, c, dim) = (4, 5, 3, 6);
    let bank = pseudo_embedding_bank(c, 2, dim, 7).unwrap();
    std::fs::write(d.join("bank.ceb"), write_embedding_bank(&bank)).unwrap();
    let mut rng = SeededRng::new(3);
    let feats: Vec<f32> = (0..h * w * dim).map(|_| rng.normal() as f32).collect();
    std::fs::write(d.join("f.prb"), write_volume_raw(h, w, dim, &feats)).unwrap();
    let labels = LabelMap2D::new(h, w, (0..h * w).map(|p| (p % c) as u16).collect()).unwrap();
    std::fs::write(d.join("l.png"), encode_label_png(&labels).unwrap()).unwrap();
    ok(
        d,
        &["cda", "--bank", "bank.ceb", "--features", "f.prb", "--labels", "l.png", "--out", "sim.prb", "--json", "r.json"],
    );
    let r = json(&d.join("r.json"));
    assert_eq!(r["scored_pixels"], 20);
    assert!(r["loss"].as_f64().unwrap() > 0.0);
    assert_eq!(std::fs::read(d.join("sim.prb")).unwrap().len(), 16 + h * w * c * 4);

    let wrong = LabelMap2D::new(2, 2, vec![0; 4]).unwrap();
    std::fs::write(d.join("small.png"), encode_label_png(&wrong).unwrap()).unwrap();
    let out = panmix(d, &["cda", "--bank", "bank.ceb", "--features", "f.prb", "--labels", "small.png"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn loss_check_passes() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["loss-check", "--trials", "5", "--json", "g.json"]);
    assert!(out.contains("PASS") && !out.contains("FAIL"));
    let r = json(&tmp.path().join("g.json"));
    assert_eq!(r["losses"].as_array().unwrap().len(), 8);
}

#[test]
fn ablation_report_has_rows_and_summary() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("grid.cfg"),
        "variants = baseline, imix\ndirections = t2s\ntaus = 0.5\nseeds = 1, 2\n\
         iterations = 20\nepochs = 1\neval_scenes = 2\nheight = 12\nwidth = 12\nshapes_max = 2\nradius_max = 2\n",
    )
    .unwrap();
    let text = ok(d, &["synth", "ablate", "--grid", "grid.cfg", "--out", "ab"]);
    assert!(text.contains("baseline"));
    let r = json(&d.join("ab/ablation.json"));
    assert_eq!(r["rows"].as_array().unwrap().len(), 4);
    assert_eq!(r["summary"].as_array().unwrap().len(), 2);
    let schema: serde_json::Value = serde_json::from_str(&ok(d, &["synth", "ablate", "--grid", "grid.cfg", "--schema"])).unwrap();
    assert_eq!(schema["title"], "AblationReport");
}
