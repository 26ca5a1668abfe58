//! End-to-end checks of the `iqtex` binary: exit codes, output formats, and
//! the train -> score and train -> index -> query pipelines on tiny inputs.

use std::path::Path;
use std::process::{Command, Output};

fn iqtex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqtex"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to spawn iqtex")
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(str::to_string)
        .collect()
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth_corpus(dir: &Path, size: usize, samples: usize) {
    let out = iqtex(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--size",
        &size.to_string(),
        "--samples-per-class",
        &samples.to_string(),
        "--seed",
        "3",
    ]);
    assert_success(&out, "synth corpus");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(iqtex(&[]).status.code(), Some(1));
    assert_eq!(iqtex(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(iqtex(&["iqa-score", "--model"]).status.code(), Some(1));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(iqtex(&["--help"]).status.code(), Some(0));
    assert_eq!(iqtex(&["--version"]).status.code(), Some(0));
    assert_eq!(iqtex(&["train-filters", "--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let out = iqtex(&["iqa-score", "--model", "/no/such/model.json", "a.ppm", "b.ppm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let out = iqtex(&[
        "texture-index",
        "--model",
        "/no/such/model.json",
        "--manifest",
        empty.to_str().unwrap(),
        "--out",
        dir.path().join("idx.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_corpus_writes_images_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_corpus(&corpus, 32, 2);
    let manifest = std::fs::read_to_string(corpus.join("manifest.tsv")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines.len(), 24, "12 classes x 2 samples");
    for line in lines {
        let (file, class) = line.split_once('\t').unwrap();
        assert!(corpus.join(file).is_file(), "missing {file}");
        assert!(file.starts_with(class));
    }
}

#[test]
fn synth_natural_writes_requested_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = iqtex(&[
        "synth",
        "--kind",
        "natural",
        "--out",
        dir.path().to_str().unwrap(),
        "--size",
        "40",
        "--count",
        "3",
    ]);
    assert_success(&out, "synth natural");
    for i in 0..3 {
        assert!(dir.path().join(format!("natural_{i:03}.ppm")).is_file());
    }
}

#[test]
fn train_filterset_writes_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("filters.json");
    let out = iqtex(&[
        "train-filters",
        "--kind",
        "filterset",
        "--out",
        model.to_str().unwrap(),
        "--synthetic",
        "2",
        "--patches-per-image",
        "30",
        "--h",
        "6",
        "--iters",
        "10",
    ]);
    assert_success(&out, "train filterset");
    let text = std::fs::read_to_string(&model).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["kind"], "filterset");
    assert_eq!(json["format_version"], 1);
}

#[test]
fn unique_scores_identical_pair_as_1() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("uq.json");
    let out = iqtex(&[
        "train-filters",
        "--kind",
        "unique",
        "--out",
        model.to_str().unwrap(),
        "--synthetic",
        "3",
        "--patches-per-image",
        "40",
        "--h",
        "12",
        "--iters",
        "25",
        "--seed",
        "5",
    ]);
    assert_success(&out, "train unique");

    let images = dir.path().join("imgs");
    let out = iqtex(&[
        "synth", "--kind", "natural", "--out",
        images.to_str().unwrap(),
        "--size", "64", "--count", "2",
    ]);
    assert_success(&out, "synth natural");
    let a = images.join("natural_000.ppm");
    let b = images.join("natural_001.ppm");

    let out = iqtex(&[
        "iqa-score",
        "--model",
        model.to_str().unwrap(),
        a.to_str().unwrap(),
        a.to_str().unwrap(),
        b.to_str().unwrap(),
    ]);
    assert_success(&out, "iqa-score");
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 2);
    let self_score: f64 = lines[0].split('\t').nth(2).unwrap().parse().unwrap();
    let cross_score: f64 = lines[1].split('\t').nth(2).unwrap().parse().unwrap();
    assert_eq!(self_score, 1.0);
    assert!(cross_score < 1.0);

    // iqa-eval on the same model: rating columns correlate with self vs cross.
    let pairs = dir.path().join("pairs.tsv");
    std::fs::write(
        &pairs,
        "imgs/natural_000.ppm\timgs/natural_000.ppm\t5.0\n\
         imgs/natural_000.ppm\timgs/natural_001.ppm\t1.0\n\
         imgs/natural_001.ppm\timgs/natural_001.ppm\t4.5\n\
         imgs/natural_001.ppm\timgs/natural_000.ppm\t1.5\n",
    )
    .unwrap();
    let scores_out = dir.path().join("scores.tsv");
    let out = iqtex(&[
        "iqa-eval",
        "--model",
        model.to_str().unwrap(),
        "--pairs",
        pairs.to_str().unwrap(),
        "--scores-out",
        scores_out.to_str().unwrap(),
    ]);
    assert_success(&out, "iqa-eval");
    let lines = stdout_lines(&out);
    let metrics: Vec<&str> = lines
        .iter()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(metrics, ["spearman", "pearson", "rmse", "outlier_ratio"]);
    // Both self pairs score exactly 1.0, so the tie caps Spearman at ~0.894.
    let spearman: f64 = lines[0].split('\t').nth(1).unwrap().parse().unwrap();
    assert!(spearman > 0.8, "self pairs should outrank cross pairs: {spearman}");
    let written = std::fs::read_to_string(&scores_out).unwrap();
    assert_eq!(written.lines().count(), 4);
    assert!(written.lines().all(|l| l.split('\t').count() == 4));
}

#[test]
fn texture_pipeline_trains_indexes_queries_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_corpus(&corpus, 96, 2);
    let manifest = corpus.join("manifest.tsv");

    let model = dir.path().join("texture.json");
    let out = iqtex(&[
        "train-filters",
        "--kind", "texture",
        "--out", model.to_str().unwrap(),
        "--manifest", manifest.to_str().unwrap(),
        "--h-color", "4",
        "--h2", "3",
        "--h3", "6",
        "--pool-k", "2",
        "--h", "5",
        "--crops-per-image", "1",
        "--iters", "4",
        "--seed", "5",
    ]);
    assert_success(&out, "train texture");

    let index = dir.path().join("index.json");
    let out = iqtex(&[
        "texture-index",
        "--model", model.to_str().unwrap(),
        "--manifest", manifest.to_str().unwrap(),
        "--out", index.to_str().unwrap(),
    ]);
    assert_success(&out, "texture-index");

    // Querying with an indexed image must return it at rank 1 with
    // correlation exactly 1. The query id is the corpus's lexicographically
    // first, so the outcome is stable even if other entries tie at 1
    // (this barely-trained fixture produces many rank-order ties).
    let query = corpus.join("checker_large_00.ppm");
    let out = iqtex(&[
        "texture-query",
        "--model", model.to_str().unwrap(),
        "--index", index.to_str().unwrap(),
        query.to_str().unwrap(),
        "--top", "3",
        "--samples-per-class", "2",
    ]);
    assert_success(&out, "texture-query");
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 3);
    let top: Vec<&str> = lines[0].split('\t').collect();
    assert_eq!(top[0], "1");
    assert_eq!(top[1], "checker_large_00.ppm");
    assert_eq!(top[2], "checker_large");
    assert_eq!(top[3].parse::<f64>().unwrap(), 1.0);
    assert_eq!(top[4], "1");

    let out = iqtex(&[
        "texture-eval",
        "--index", index.to_str().unwrap(),
        "--samples-per-class", "2",
    ]);
    assert_success(&out, "texture-eval");
    let lines = stdout_lines(&out);
    let names: Vec<&str> = lines.iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["precision_at_1", "mrr", "map"]);
    for line in &lines {
        let v: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    // Noise-free robustness row must reproduce the leave-one-out numbers.
    let out = iqtex(&[
        "robustness",
        "--model", model.to_str().unwrap(),
        "--manifest", manifest.to_str().unwrap(),
        "--sigmas", "0",
        "--samples-per-class", "2",
    ]);
    assert_success(&out, "robustness");
    let rows = stdout_lines(&out);
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split('\t').collect();
    assert_eq!(fields.len(), 4);
    assert_eq!(fields[0].parse::<f64>().unwrap(), 0.0);
    let clean_p1: f64 = lines[0].split('\t').nth(1).unwrap().parse().unwrap();
    assert_eq!(fields[1].parse::<f64>().unwrap(), clean_p1);
}

#[test]
fn curet_prepare_selects_condition_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("raw");

    // Seed photographs, then lay them out like a photographic corpus:
    // class directories with `sample-<condition>` file stems.
    let seeds = dir.path().join("seeds");
    let out = iqtex(&[
        "synth", "--kind", "natural", "--out",
        seeds.to_str().unwrap(),
        "--size", "50", "--count", "2",
    ]);
    assert_success(&out, "synth natural");
    for (class, n_kept) in [("felt", 2), ("plaster", 1)] {
        let class_dir = src.join(class);
        std::fs::create_dir_all(&class_dir).unwrap();
        for i in 0..n_kept {
            std::fs::copy(
                seeds.join(format!("natural_{i:03}.ppm")),
                class_dir.join(format!("{class}{i:02}-55.ppm")),
            )
            .unwrap();
        }
        // A different viewing condition that must be ignored.
        std::fs::copy(
            seeds.join("natural_000.ppm"),
            class_dir.join(format!("{class}00-102.ppm")),
        )
        .unwrap();
    }

    let prepared = dir.path().join("prepared");
    let out = iqtex(&[
        "curet-prepare",
        "--src", src.to_str().unwrap(),
        "--out", prepared.to_str().unwrap(),
        "--condition", "55",
        "--samples-per-class", "3",
        "--size", "32",
    ]);
    assert_success(&out, "curet-prepare");
    let manifest = std::fs::read_to_string(prepared.join("manifest.tsv")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines.len(), 3, "2 felt + 1 plaster: {manifest}");
    assert!(lines.iter().any(|l| l.ends_with("\tfelt")));
    assert!(lines.iter().any(|l| l.ends_with("\tplaster")));
    for line in lines {
        let file = line.split('\t').next().unwrap();
        let header = std::fs::read(prepared.join(file)).unwrap();
        let text = String::from_utf8_lossy(&header[..20]);
        assert!(text.starts_with("P6\n32 32\n"), "unexpected header {text:?}");
    }

    // No matches for an absent condition is a data error.
    let out = iqtex(&[
        "curet-prepare",
        "--src", src.to_str().unwrap(),
        "--out", dir.path().join("none").to_str().unwrap(),
        "--condition", "999",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
