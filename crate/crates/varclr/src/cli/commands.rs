//! Command implementations behind the CLI surface.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Command;
use crate::contrastive::{train, TrainConfig};
use crate::encoders::{
    export_embeddings, import_embeddings, Checkpoint, EmbeddingTable, EncoderKind,
};
use crate::eval::{
    evaluate_benchmark, parse_benchmark_csv, similarity_score, EncoderScorer, LevenshteinScorer,
    ScoreReport,
};
use crate::manifest::RunManifest;
use crate::mining::{mine_corpus, parse_commit_stream, CommitDiff, DiffError};
use crate::retrieval::{
    build_index_parallel, filter_similar_pairs, hit_at_k, make_typos, read_index_file, search,
    write_index_file,
};
use crate::tokenizer::{canonicalize, tokenize, train_bpe, BpeVocab};
use crate::util::sig6;
use crate::Error;

pub(super) fn run(command: Command, workers: usize) -> Result<(), Error> {
    match command {
        Command::Mine {
            diffs,
            max_lines,
            out,
        } => run_mine(&diffs, max_lines, &out),
        Command::TrainBpe {
            corpus,
            vocab_size,
            min_freq,
            out,
        } => run_train_bpe(&corpus, vocab_size, min_freq, &out),
        Command::Tokenize { vocab, names } => run_tokenize(&vocab, &names),
        Command::Train {
            pairs,
            vocab,
            encoder,
            dim,
            hidden,
            batch,
            tau,
            lr,
            epochs,
            patience,
            seed,
            init_embeddings,
            data_fraction,
            val_fraction,
            out,
        } => {
            let config = TrainConfig {
                batch_size: batch,
                temperature: tau,
                learning_rate: lr,
                max_epochs: epochs,
                patience,
                validation_fraction: val_fraction,
                seed,
                embed_dim: dim,
                hidden_dim: hidden,
                data_fraction,
                ..TrainConfig::default()
            };
            run_train(
                &pairs,
                &vocab,
                encoder.into(),
                &config,
                init_embeddings.as_deref(),
                &out,
            )
        }
        Command::Score { ckpt, var1, var2 } => {
            let ckpt = load_checkpoint(&ckpt)?;
            println!("{}", sig6(similarity_score(&var1, &var2, &ckpt)?));
            Ok(())
        }
        Command::Eval {
            ckpt,
            benchmark,
            baseline,
        } => run_eval(ckpt.as_deref(), &benchmark, baseline.as_deref()),
        Command::Index { ckpt, pool, out } => run_index(&ckpt, &pool, &out, workers),
        Command::Search {
            index,
            query,
            k,
            exclude_query,
        } => {
            let (idx, ckpt) = with_path(read_index_file(&index), &index)?;
            for hit in search(&idx, &ckpt, &query, k, exclude_query)? {
                println!("{}\t{}", hit.name, sig6(hit.score));
            }
            Ok(())
        }
        Command::Hitk {
            index,
            pairs,
            benchmark,
            threshold,
            both_directions,
            ks,
            exclude_query,
            out,
        } => run_hitk(
            &index,
            pairs.as_deref(),
            benchmark.as_deref(),
            threshold,
            both_directions,
            &ks,
            exclude_query,
            out.as_deref(),
        ),
        Command::TypoGen {
            pool,
            count,
            seed,
            out,
        } => run_typo_gen(&pool, count, seed, &out),
        Command::ExportEmbeddings { ckpt, out } => run_export_embeddings(&ckpt, &out),
    }
}

/// Attach the file path to errors so diagnostics name their input.
fn with_path<T, E: std::fmt::Display>(result: Result<T, E>, path: &Path) -> Result<T, Error> {
    result.map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Error> {
    with_path(std::fs::read_to_string(path), path)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Error> {
    with_path(Checkpoint::load(path), path)
}

fn read_nonempty_lines(path: &Path) -> Result<Vec<String>, Error> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn run_mine(diffs: &Path, max_lines: usize, out: &Path) -> Result<(), Error> {
    let mut manifest = RunManifest::new("mine");
    manifest.config("max_lines", max_lines as u64);

    let mut files: Vec<PathBuf> = if diffs.is_dir() {
        std::fs::read_dir(diffs)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|p| p.is_file())
            .collect()
    } else {
        vec![diffs.to_path_buf()]
    };
    files.sort();

    let mut items: Vec<Result<CommitDiff, DiffError>> = Vec::new();
    let mut combined = Vec::new();
    for file in &files {
        let text = read_text(file)?;
        combined.extend_from_slice(text.as_bytes());
        let default_id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "unknown".to_string());
        match parse_commit_stream(&text, &default_id) {
            Ok(commits) => items.extend(commits.into_iter().map(Ok)),
            Err(e) => {
                eprintln!("varclr: skipping {}: {e}", file.display());
                items.push(Err(e));
            }
        }
    }
    manifest.input_bytes(&diffs.display().to_string(), &combined);

    let report = mine_corpus(items, max_lines);
    let mut body = String::new();
    for pair in &report.pairs {
        body.push_str(&format!(
            "{}\t{}\t{}\n",
            pair.before, pair.after, pair.source_commit
        ));
    }
    std::fs::write(out, body)?;
    manifest.write_for(out)?;
    eprintln!(
        "mined {} pairs from {} commits ({} inputs skipped)",
        report.pairs.len(),
        report.commits_seen,
        report.parse_failures.len()
    );
    Ok(())
}

/// Corpus lines are identifiers; TSV lines contribute their first two
/// columns, so a mined pairs file is a valid corpus as-is.
fn corpus_names(lines: &[String]) -> Vec<String> {
    let mut names = Vec::new();
    for line in lines {
        if line.contains('\t') {
            names.extend(line.split('\t').take(2).map(str::to_string));
        } else {
            names.push(line.clone());
        }
    }
    names
}

fn run_train_bpe(corpus: &Path, vocab_size: usize, min_freq: u64, out: &Path) -> Result<(), Error> {
    let mut manifest = RunManifest::new("train-bpe");
    manifest
        .config("vocab_size", vocab_size as u64)
        .config("min_freq", min_freq);
    manifest.input(corpus)?;

    let names = corpus_names(&read_nonempty_lines(corpus)?);
    let mut skipped = 0usize;
    let words: Vec<_> = names
        .iter()
        .filter_map(|n| match canonicalize(n) {
            Ok(t) => Some(t),
            Err(_) => {
                skipped += 1;
                None
            }
        })
        .collect();
    let vocab = train_bpe(words, vocab_size, min_freq)?;

    let mut file = std::fs::File::create(out)?;
    vocab.write_to(&mut file)?;
    file.sync_all()?;
    manifest.write_for(out)?;
    eprintln!(
        "trained vocab: {} tokens, {} merges ({} corpus names skipped)",
        vocab.vocab_size(),
        vocab.merges().len(),
        skipped
    );
    Ok(())
}

fn run_tokenize(vocab: &Path, names: &[String]) -> Result<(), Error> {
    let vocab = BpeVocab::read_from_path(vocab)?;
    let mut stdout = std::io::stdout().lock();
    for name in names {
        let seq = tokenize(name, &vocab)?;
        writeln!(stdout, "{}", seq.surface.join(" "))?;
    }
    Ok(())
}

fn read_pairs_tsv(path: &Path) -> Result<Vec<crate::mining::RenamePair>, Error> {
    let mut pairs = Vec::new();
    for (i, line) in read_nonempty_lines(path)?.into_iter().enumerate() {
        let mut fields = line.split('\t');
        let (Some(before), Some(after)) = (fields.next(), fields.next()) else {
            return Err(Error::Invalid(format!(
                "{} line {}: expected `before<TAB>after[<TAB>commit]`",
                path.display(),
                i + 1
            )));
        };
        pairs.push(crate::mining::RenamePair {
            before: before.to_string(),
            after: after.to_string(),
            source_commit: fields.next().unwrap_or("").to_string(),
        });
    }
    Ok(pairs)
}

fn run_train(
    pairs_path: &Path,
    vocab_path: &Path,
    kind: EncoderKind,
    config: &TrainConfig,
    init_embeddings: Option<&Path>,
    out: &Path,
) -> Result<(), Error> {
    let mut manifest = RunManifest::new("train");
    manifest
        .config(
            "config",
            serde_json::to_value(config).expect("config serializes"),
        )
        .config("encoder", kind.name())
        .seed(config.seed);
    manifest.input(pairs_path)?;
    manifest.input(vocab_path)?;

    let pairs = read_pairs_tsv(pairs_path)?;
    let vocab = BpeVocab::read_from_path(vocab_path)?;

    // The overlay table replicates the same seeded initialization the
    // trainer would draw, so unmatched rows keep identical values.
    let init_table = match init_embeddings {
        None => None,
        Some(path) => {
            manifest.input(path)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut table = EmbeddingTable::random(vocab.vocab_size(), config.embed_dim, &mut rng);
            let file = std::fs::File::open(path)?;
            let matched = import_embeddings(&mut table, &vocab, std::io::BufReader::new(file))?;
            eprintln!("initialized {matched} embedding rows from {}", path.display());
            Some(table)
        }
    };

    let outcome = train(&pairs, &vocab, kind, config, init_table)?;
    outcome.checkpoint.save(out)?;

    let mut log = String::from("epoch,train_loss,val_loss,seconds\n");
    for entry in &outcome.log {
        log.push_str(&format!(
            "{},{},{},{}\n",
            entry.epoch,
            sig6(entry.train_loss),
            sig6(entry.val_loss),
            sig6(entry.seconds)
        ));
    }
    let log_path = {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".log.csv");
        out.with_file_name(name)
    };
    std::fs::write(&log_path, log)?;
    manifest.write_for(out)?;

    eprintln!(
        "trained {} on {} pairs ({} validation): best epoch {}, val loss {}",
        outcome.checkpoint.params.describe(),
        outcome.train_pairs,
        outcome.val_pairs,
        outcome.checkpoint.meta.epoch,
        sig6(outcome.checkpoint.meta.val_loss)
    );
    Ok(())
}

fn print_report(report: &ScoreReport) {
    println!("metric,spearman,pairs,dropped,scorer");
    if let Some(s) = report.similarity {
        println!(
            "similarity,{},{},{},{}",
            sig6(s),
            report.pairs_scored,
            report.pairs_dropped,
            report.scorer
        );
    }
    if let Some(r) = report.relatedness {
        println!(
            "relatedness,{},{},{},{}",
            sig6(r),
            report.pairs_scored,
            report.pairs_dropped,
            report.scorer
        );
    }
}

fn run_eval(ckpt: Option<&Path>, benchmark: &Path, baseline: Option<&str>) -> Result<(), Error> {
    let pairs = parse_benchmark_csv(&read_text(benchmark)?)?;
    let report = match baseline {
        Some("levenshtein") => evaluate_benchmark(&pairs, &LevenshteinScorer)?,
        Some(other) => return Err(Error::Invalid(format!("unknown baseline `{other}`"))),
        None => {
            let path = ckpt.expect("clap requires --ckpt without --baseline");
            let checkpoint = load_checkpoint(path)?;
            let scorer = EncoderScorer {
                checkpoint: &checkpoint,
            };
            evaluate_benchmark(&pairs, &scorer)?
        }
    };
    print_report(&report);
    Ok(())
}

fn run_index(ckpt_path: &Path, pool: &Path, out: &Path, workers: usize) -> Result<(), Error> {
    let mut manifest = RunManifest::new("index");
    manifest.input(ckpt_path)?;
    manifest.input(pool)?;
    manifest.config("workers", workers as u64);

    let ckpt = load_checkpoint(ckpt_path)?;
    let names = read_nonempty_lines(pool)?;
    let report = build_index_parallel(&names, &ckpt, workers.max(1))?;
    write_index_file(&report.index, &ckpt, out)?;
    manifest.write_for(out)?;
    eprintln!(
        "indexed {} names at dim {} ({} dropped)",
        report.index.len(),
        report.index.dim(),
        report.dropped.len()
    );
    for name in &report.dropped {
        eprintln!("varclr: dropped from pool: {name}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_hitk(
    index_path: &Path,
    pairs: Option<&Path>,
    benchmark: Option<&Path>,
    threshold: f64,
    both_directions: bool,
    ks: &[usize],
    exclude_query: bool,
    out: Option<&Path>,
) -> Result<(), Error> {
    let mut manifest = RunManifest::new("hitk");
    manifest.input(index_path)?;
    manifest
        .config("ks", ks.iter().map(|k| *k as u64).collect::<Vec<_>>())
        .config("exclude_query", exclude_query);

    let (index, ckpt) = with_path(read_index_file(index_path), index_path)?;
    let queries: Vec<(String, String)> = match (pairs, benchmark) {
        (Some(path), None) => {
            manifest.input(path)?;
            read_pairs_tsv(path)?
                .into_iter()
                .map(|p| (p.before, p.after))
                .collect()
        }
        (None, Some(path)) => {
            manifest.input(path)?;
            manifest
                .config("threshold", threshold)
                .config("both_directions", both_directions);
            let bench = parse_benchmark_csv(&read_text(path)?)?;
            filter_similar_pairs(&bench, threshold, both_directions)
        }
        _ => return Err(Error::Invalid("need exactly one of --pairs / --benchmark".into())),
    };
    if queries.is_empty() {
        return Err(Error::Invalid("no queries to evaluate".into()));
    }

    let curve = hit_at_k(&index, &ckpt, &queries, ks, exclude_query)?;
    let mut csv = String::from("k,hit_rate\n");
    for (k, hit) in curve.ks.iter().zip(&curve.hits) {
        csv.push_str(&format!("{k},{}\n", sig6(*hit)));
    }
    match out {
        Some(path) => {
            std::fs::write(path, csv)?;
            manifest.write_for(path)?;
            eprintln!("evaluated {} queries", curve.queries);
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_typo_gen(pool: &Path, count: usize, seed: u64, out: &Path) -> Result<(), Error> {
    let mut manifest = RunManifest::new("typo-gen");
    manifest.config("count", count as u64).seed(seed);
    manifest.input(pool)?;

    let names = read_nonempty_lines(pool)?;
    let typos = make_typos(&names, count, seed)?;
    let mut body = String::new();
    for t in &typos {
        body.push_str(&format!("{}\t{}\n", t.misspelled, t.correct));
    }
    std::fs::write(out, body)?;
    manifest.write_for(out)?;
    eprintln!("generated {} typo pairs", typos.len());
    Ok(())
}

fn run_export_embeddings(ckpt_path: &Path, out: &Path) -> Result<(), Error> {
    let mut manifest = RunManifest::new("export-embeddings");
    manifest.input(ckpt_path)?;

    let ckpt = load_checkpoint(ckpt_path)?;
    let mut buf = Vec::new();
    export_embeddings(ckpt.params.table(), &ckpt.vocab, &mut buf)?;
    std::fs::write(out, buf)?;
    manifest.write_for(out)?;
    eprintln!(
        "exported {} rows at dim {}",
        ckpt.params.table().vocab_size(),
        ckpt.params.table().dim()
    );
    Ok(())
}
