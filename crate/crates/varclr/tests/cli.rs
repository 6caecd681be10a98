//! End-to-end runs of the `varclr` binary: every subcommand, exit codes,
//! artifact determinism, and manifests.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn varclr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varclr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = varclr(dir, args);
    assert!(
        out.status.success(),
        "varclr {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

const DIFF_STREAM: &str = "commit aaa111\n\
Author: Dev <dev@example.com>\n\
\n\
\x20   rename max to maximum\n\
\n\
--- a/f.c\n\
+++ b/f.c\n\
@@ -1,2 +1,2 @@\n\
\x20int other;\n\
-int max = 0;\n\
+int maximum = 0;\n\
commit bbb222\n\
\n\
--- a/g.c\n\
+++ b/g.c\n\
@@ -5 +5 @@\n\
-int a = b + c;\n\
+int a = b - c;\n\
commit ccc333\n\
\n\
--- a/h.c\n\
+++ b/h.c\n\
@@ -1,2 +1,2 @@\n\
-cnt += 1;\n\
-return cnt;\n\
+count += 1;\n\
+return count;\n";

/// Twenty word pairs that train quickly at small dimensions.
fn write_training_pairs(path: &Path) {
    let words = [
        "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india",
        "juliet", "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo",
        "sierra", "tango",
    ];
    let mut body = String::new();
    for w in words {
        body.push_str(&format!("{w}_tmp\t{w}_val\tsynth\n"));
    }
    std::fs::write(path, body).unwrap();
}

struct Pipeline {
    dir: PathBuf,
}

impl Pipeline {
    /// Mine + vocab + checkpoint, shared by several tests.
    fn build(root: &Path, seed: &str) -> Pipeline {
        let dir = root.to_path_buf();
        std::fs::write(dir.join("stream.diff"), DIFF_STREAM).unwrap();
        write_training_pairs(&dir.join("pairs.tsv"));
        ok(&dir, &["mine", "--diffs", "stream.diff", "--out", "mined.tsv"]);
        ok(
            &dir,
            &[
                "train-bpe",
                "--corpus",
                "pairs.tsv",
                "--vocab-size",
                "400",
                "--min-freq",
                "1",
                "--out",
                "vocab.txt",
            ],
        );
        ok(
            &dir,
            &[
                "train",
                "--pairs",
                "pairs.tsv",
                "--vocab",
                "vocab.txt",
                "--encoder",
                "avg",
                "--dim",
                "16",
                "--batch",
                "8",
                "--epochs",
                "12",
                "--patience",
                "12",
                "--val-fraction",
                "0.1",
                "--seed",
                seed,
                "--out",
                "model.ckpt",
            ],
        );
        Pipeline { dir }
    }
}

#[test]
fn mine_extracts_the_expected_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("stream.diff"), DIFF_STREAM).unwrap();
    ok(
        tmp.path(),
        &["mine", "--diffs", "stream.diff", "--out", "mined.tsv"],
    );
    let mined = std::fs::read_to_string(tmp.path().join("mined.tsv")).unwrap();
    assert_eq!(mined, "max\tmaximum\taaa111\ncnt\tcount\tccc333\n");
    assert!(tmp.path().join("mined.tsv.manifest.json").exists());
}

#[test]
fn tokenize_prints_space_joined_subwords() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("corpus.txt"), "send\nmsg\n".repeat(10)).unwrap();
    ok(
        tmp.path(),
        &[
            "train-bpe",
            "--corpus",
            "corpus.txt",
            "--vocab-size",
            "300",
            "--min-freq",
            "2",
            "--out",
            "vocab.txt",
        ],
    );
    let out = ok(
        tmp.path(),
        &["tokenize", "--vocab", "vocab.txt", "sendmsg", "max_iteration"],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "send ##msg");
    // Unseen words fall back to characters but never fail.
    assert!(lines[1].starts_with("m ##a ##x"));
}

#[test]
fn score_of_identical_names_prints_one() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::build(tmp.path(), "3");
    let out = ok(&p.dir, &["score", "--ckpt", "model.ckpt", "same", "same"]);
    assert_eq!(out.trim(), "1.0");
}

#[test]
fn full_retrieval_pipeline_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::build(tmp.path(), "3");

    let pool: String = std::fs::read_to_string(p.dir.join("pairs.tsv"))
        .unwrap()
        .lines()
        .flat_map(|l| l.split('\t').take(2).map(|s| format!("{s}\n")))
        .collect();
    std::fs::write(p.dir.join("pool.txt"), pool).unwrap();

    ok(
        &p.dir,
        &[
            "index", "--ckpt", "model.ckpt", "--pool", "pool.txt", "--out", "pool.idx",
        ],
    );
    let hits = ok(
        &p.dir,
        &[
            "search",
            "--index",
            "pool.idx",
            "--query",
            "alpha_tmp",
            "--k",
            "3",
        ],
    );
    let first = hits.lines().next().unwrap();
    let mut cols = first.split('\t');
    // The query is in the pool, so it ranks first with score 1.
    assert_eq!(cols.next(), Some("alpha_tmp"));
    assert_eq!(cols.next(), Some("1.0"));

    ok(
        &p.dir,
        &[
            "typo-gen", "--pool", "pool.txt", "--count", "12", "--seed", "5", "--out",
            "typos.tsv",
        ],
    );
    let typos = std::fs::read_to_string(p.dir.join("typos.tsv")).unwrap();
    assert_eq!(typos.lines().count(), 12);
    for line in typos.lines() {
        let mut cols = line.split('\t');
        let (miss, correct) = (cols.next().unwrap(), cols.next().unwrap());
        assert_ne!(miss, correct);
    }

    let curve = ok(
        &p.dir,
        &[
            "hitk", "--index", "pool.idx", "--pairs", "typos.tsv", "--ks", "1,5,40",
        ],
    );
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "k,hit_rate");
    assert_eq!(lines.len(), 4);
    // Targets are in the pool, so the curve ends at 1 when k hits the pool size.
    assert!(lines[3].starts_with("40,"), "{curve}");
    assert_eq!(lines[3], "40,1.0");

    // Curve is nondecreasing in k.
    let rates: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
}

#[test]
fn eval_reports_coefficients_for_encoder_and_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::build(tmp.path(), "3");
    std::fs::write(
        p.dir.join("bench.csv"),
        "var1,var2,relatedness,similarity\n\
         alpha_tmp,alpha_val,0.9,0.8\n\
         bravo_tmp,bravo_val,0.85,0.75\n\
         charlie_tmp,delta_val,0.2,0.1\n\
         echo_tmp,foxtrot_val,0.3,0.15\n\
         golf_tmp,golf_val,0.8,0.7\n",
    )
    .unwrap();
    let out = ok(
        &p.dir,
        &["eval", "--ckpt", "model.ckpt", "--benchmark", "bench.csv"],
    );
    assert!(out.starts_with("metric,spearman,pairs,dropped,scorer\n"));
    assert!(out.contains("\nrelatedness,") || out.contains("relatedness,"));
    let out = ok(
        &p.dir,
        &["eval", "--benchmark", "bench.csv", "--baseline", "levenshtein"],
    );
    assert!(out.contains("levenshtein"));
}

#[test]
fn export_import_embeddings_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::build(tmp.path(), "3");
    ok(
        &p.dir,
        &["export-embeddings", "--ckpt", "model.ckpt", "--out", "emb.txt"],
    );
    let text = std::fs::read_to_string(p.dir.join("emb.txt")).unwrap();
    let header = text.lines().next().unwrap();
    let rows = text.lines().count() - 1;
    let promised: usize = header.split(' ').next().unwrap().parse().unwrap();
    assert_eq!(rows, promised);

    // Retraining with the exported table as initialization reproduces the
    // original parameters exactly: every row matches, so the random
    // initialization is fully overlaid.
    ok(
        &p.dir,
        &[
            "train",
            "--pairs",
            "pairs.tsv",
            "--vocab",
            "vocab.txt",
            "--encoder",
            "avg",
            "--dim",
            "16",
            "--batch",
            "8",
            "--epochs",
            "12",
            "--patience",
            "12",
            "--val-fraction",
            "0.1",
            "--seed",
            "3",
            "--init-embeddings",
            "emb.txt",
            "--out",
            "warm.ckpt",
        ],
    );
    assert!(p.dir.join("warm.ckpt").exists());
}

#[test]
fn artifact_writing_commands_are_deterministic() {
    let tmp_a = tempfile::tempdir().unwrap();
    let tmp_b = tempfile::tempdir().unwrap();
    let a = Pipeline::build(tmp_a.path(), "9");
    let b = Pipeline::build(tmp_b.path(), "9");
    for artifact in ["mined.tsv", "vocab.txt", "model.ckpt"] {
        let bytes_a = std::fs::read(a.dir.join(artifact)).unwrap();
        let bytes_b = std::fs::read(b.dir.join(artifact)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{artifact} differs between identical runs");
    }

    // The training log's loss trajectory is deterministic; only its
    // wall-clock seconds column may differ.
    let strip_seconds = |dir: &Path| -> Vec<String> {
        std::fs::read_to_string(dir.join("model.ckpt.log.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
            .collect()
    };
    assert_eq!(strip_seconds(&a.dir), strip_seconds(&b.dir));

    // Different seed, different checkpoint.
    let tmp_c = tempfile::tempdir().unwrap();
    let c = Pipeline::build(tmp_c.path(), "10");
    assert_ne!(
        std::fs::read(a.dir.join("model.ckpt")).unwrap(),
        std::fs::read(c.dir.join("model.ckpt")).unwrap()
    );
}

#[test]
fn manifests_record_command_config_and_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::build(tmp.path(), "3");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(p.dir.join("model.ckpt.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["config"]["config"]["batch_size"].is_u64());
    assert!(manifest["inputs"].as_array().unwrap().len() >= 2);
    assert!(manifest["version"].as_str().unwrap().contains("varclr"));
}

#[test]
fn exit_codes_separate_usage_and_domain_errors() {
    let tmp = tempfile::tempdir().unwrap();

    // No arguments: usage, exit 2.
    let out = varclr(tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag: exit 2, flag named on stderr.
    let out = varclr(tmp.path(), &["score", "--bogus", "x", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));

    // Domain error (missing file): exit 1, single-line diagnostic.
    let out = varclr(tmp.path(), &["score", "--ckpt", "missing.ckpt", "a", "b"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("varclr: "), "{stderr}");
    assert!(stderr.contains("missing.ckpt"));

    // Malformed diff input: exit 1 with a line number.
    std::fs::write(tmp.path().join("bad.diff"), "--- a/f\n+++ b/f\n@@ bogus @@\n-x\n").unwrap();
    let out = varclr(
        tmp.path(),
        &["mine", "--diffs", "bad.diff", "--out", "o.tsv"],
    );
    // The malformed stream is skipped and reported, mining succeeds with
    // zero pairs.
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    // --version prints tool and format versions, exit 0.
    let out = varclr(tmp.path(), &["--version"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("varclr"));
    assert!(stdout.contains("checkpoint"));
}
