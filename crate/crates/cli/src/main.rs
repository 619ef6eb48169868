//! `mvcode`: the multi-view pipeline from the command line.
//!
//! Exit codes: 0 success, 1 validation failure (bad inputs, failed checks),
//! 2 I/O failure.

use clap::{Parser, Subcommand};
use mvcode_core::config::Config;
use mvcode_core::corpus::{
    build_pair_pool, ingest, parse_records, transform_check, ViewCorpus,
};
use mvcode_core::eval::{eval_retrieval, RetrievalQuery};
use mvcode_core::frontend::parse_source;
use mvcode_core::model::{
    grad_check, load_checkpoint, save_checkpoint, train, CheckpointMeta, ModelState,
};
use mvcode_core::pairs::{assemble_single, make_batches};
use mvcode_core::synth::synth_corpus;
use mvcode_core::typing::{train_bpe, BpeModel};
use mvcode_core::views::{build_cfg, linearize_ast, linearize_cfg};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mvcode", version, about = "Multi-view code representation pipeline")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override for the seeded subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract all views from a line-delimited {code, nl?} corpus.
    Ingest {
        input: PathBuf,
        /// Output directory for views.jsonl and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the views of a single source file.
    Views { file: PathBuf },
    /// Run the interpreter equivalence oracle over every record's variants.
    TransformCheck { input: PathBuf },
    /// Train a BPE model on a view corpus.
    BpeTrain {
        #[arg(long)]
        views: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Merge count; defaults to bpe.merges from the config.
        #[arg(long)]
        merges: Option<usize>,
    },
    /// Pre-train the encoder on a view corpus.
    Pretrain {
        #[arg(long)]
        views: PathBuf,
        #[arg(long)]
        bpe: PathBuf,
        /// Output directory for checkpoints and the loss log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-shot retrieval evaluation from a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        views: PathBuf,
        #[arg(long)]
        bpe: PathBuf,
        /// Candidate pool size per query.
        #[arg(long, default_value_t = 50)]
        pool_size: usize,
        /// mrr: NL->PL retrieval; map: PL->PT retrieval grouped by sample.
        #[arg(long, default_value = "mrr")]
        task: String,
    },
    /// Verify analytic gradients against finite differences.
    GradCheck {
        /// Sampled parameters per loss component.
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Generate a synthetic paired corpus.
    Synth {
        #[arg(long, default_value_t = 250)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn io(context: &str, e: impl std::fmt::Display) -> CliError {
        CliError::Io(format!("{context}: {e}"))
    }
}

fn main() -> ExitCode {
    // die quietly when the consumer closes the pipe (e.g. `mvcode ... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(&format!("reading config {}", p.display()), e))?;
            Config::parse(&text).map_err(|e| CliError::Validation(e.to_string()))
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

fn load_bpe(path: &Path) -> Result<BpeModel, CliError> {
    let text = read_to_string(path)?;
    BpeModel::from_text(&text).map_err(CliError::Validation)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.train_seed = seed;
    }
    let seed = config.train_seed;

    match cli.command {
        Command::Ingest { input, out } => {
            let text = read_to_string(&input)?;
            let (records, malformed) = parse_records(&text);
            for line in &malformed {
                eprintln!("skipping malformed record on line {line}");
            }
            let (corpus, manifest) = ingest(&records, seed, config.transform_variants_k);
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::io(&format!("creating {}", out.display()), e))?;
            write_file(&out.join("views.jsonl"), &corpus.to_jsonl())?;
            let manifest_json = serde_json::to_string_pretty(&manifest)
                .expect("manifest serializes");
            write_file(&out.join("manifest.json"), &manifest_json)?;
            println!(
                "ingested {} records: {} paired, {} unpaired, {} skipped, {} malformed lines",
                records.len(),
                manifest.paired,
                manifest.unpaired,
                manifest.skipped,
                malformed.len()
            );
            for (view, count) in &manifest.view_counts {
                println!("  {view}: {count} records");
            }
            println!("content hash {}", manifest.content_hash);
            Ok(())
        }
        Command::Views { file } => {
            let source = read_to_string(&file)?;
            let tree = parse_source(&source)
                .map_err(|e| CliError::Validation(format!("parse failure: {e}")))?;
            println!("PL:  {}", mvcode_core::typing::typed_pl_tokens(&tree).tokens.join(" "));
            println!("AST: {}", linearize_ast(&tree).tokens.join(" "));
            match build_cfg(&tree) {
                Ok(cfg) => println!("CFG: {}", linearize_cfg(&tree, &cfg).tokens.join(" ")),
                Err(e) => return Err(CliError::Validation(e.to_string())),
            }
            let variants = mvcode_core::transform::generate_variants(&tree, seed, 1);
            let typed = mvcode_core::typing::typed_pl_tokens(&variants[0]);
            println!("PT:  {}", typed.tokens.join(" "));
            Ok(())
        }
        Command::TransformCheck { input } => {
            let text = read_to_string(&input)?;
            let (records, malformed) = parse_records(&text);
            for line in &malformed {
                eprintln!("skipping malformed record on line {line}");
            }
            let results = transform_check(&records, seed, config.interp_step_limit);
            let mut failures = 0;
            for r in &results {
                if r.passed {
                    println!(
                        "PASS record {} ({} variants x {} inputs)",
                        r.record_index, r.variants_checked, r.inputs_checked
                    );
                } else {
                    failures += 1;
                    println!(
                        "FAIL record {}: {}",
                        r.record_index,
                        r.failure.as_deref().unwrap_or("unknown")
                    );
                }
            }
            println!("{} passed, {failures} failed", results.len() - failures);
            if failures > 0 {
                return Err(CliError::Validation(format!(
                    "{failures} programs failed the equivalence oracle"
                )));
            }
            Ok(())
        }
        Command::BpeTrain { views, out, merges } => {
            let corpus = load_views(&views)?;
            let merges = merges.unwrap_or(config.bpe_merges);
            let model = train_bpe(&corpus.token_sequences(), merges);
            write_file(&out, &model.to_text())?;
            println!(
                "trained {} merges over {} records; vocabulary size {}",
                model.merges.len(),
                corpus.records.len(),
                model.vocab_size()
            );
            Ok(())
        }
        Command::Pretrain { views, bpe, out } => {
            let corpus = load_views(&views)?;
            let bpe_model = load_bpe(&bpe)?;
            let pool = build_pair_pool(&corpus, &bpe_model, None)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            if pool.is_empty() {
                return Err(CliError::Validation("view corpus yields no pairs".into()));
            }
            let longest = pool.iter().flat_map(|p| [p.1.len(), p.2.len()]).max().unwrap();
            if longest > config.model_max_positions {
                return Err(CliError::Validation(format!(
                    "longest input is {longest} subtokens; raise model.max_positions (currently {})",
                    config.model_max_positions
                )));
            }
            let encoder_config = config.encoder_config(bpe_model.vocab_size());
            let mut state = ModelState::init(encoder_config)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let corpus_hash = file_hash(&views)?;
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::io(&format!("creating {}", out.display()), e))?;
            println!(
                "pre-training: {} pairs, vocab {}, d={} L={} n={} steps={}",
                pool.len(),
                bpe_model.vocab_size(),
                config.model_d,
                config.model_layers,
                config.train_batch_n,
                config.train_steps
            );
            let options = config.train_options();
            let out_dir = out.clone();
            let hash = corpus_hash.clone();
            let log = train(&mut state, &pool, &options, |epoch, steps, snapshot| {
                let meta = CheckpointMeta { corpus_hash: hash.clone(), steps };
                let path = out_dir.join(format!("checkpoint-epoch{epoch}.ckpt"));
                if let Err(e) = save_checkpoint(snapshot, &meta, &path) {
                    eprintln!("warning: failed to write {}: {e}", path.display());
                }
            })
            .map_err(|e| CliError::Validation(e.to_string()))?;
            let meta = CheckpointMeta { corpus_hash, steps: log.records.len() };
            save_checkpoint(&state, &meta, &out.join("model.ckpt"))
                .map_err(|e| CliError::io("writing checkpoint", e))?;
            let mut log_text = String::new();
            for r in &log.records {
                log_text.push_str(&serde_json::to_string(r).expect("loss record serializes"));
                log_text.push('\n');
            }
            write_file(&out.join("loss_log.jsonl"), &log_text)?;
            let first = &log.records[0];
            let last = log.records.last().unwrap();
            println!(
                "done: {} steps, total loss {:.4} -> {:.4} (mvcl {:.4} -> {:.4})",
                log.records.len(),
                first.total,
                last.total,
                first.mvcl,
                last.mvcl
            );
            Ok(())
        }
        Command::Eval { checkpoint, views, bpe, pool_size, task } => {
            let (state, meta) = load_checkpoint(&checkpoint)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let corpus = load_views(&views)?;
            let bpe_model = load_bpe(&bpe)?;
            let queries = match task.as_str() {
                "mrr" => nl_to_pl_queries(&corpus, &bpe_model, pool_size, seed)?,
                "map" => pl_to_pt_queries(&corpus, &bpe_model)?,
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown task {other}; expected mrr or map"
                    )))
                }
            };
            let result =
                eval_retrieval(&state, &queries).map_err(|e| CliError::Validation(e.to_string()))?;
            println!(
                "checkpoint at {} steps (corpus {})",
                meta.steps,
                &meta.corpus_hash[..12.min(meta.corpus_hash.len())]
            );
            println!(
                "{} queries, pool size {}: MRR {:.4}, MAP@R {:.4}",
                queries.len(),
                result.pool_size,
                result.mrr,
                result.map_at_r
            );
            Ok(())
        }
        Command::GradCheck { samples } => {
            let records = synth_corpus(6, seed.wrapping_add(21));
            let (corpus, _) = ingest(&records, seed, 1);
            let bpe = train_bpe(&corpus.token_sequences(), 80);
            let pool = build_pair_pool(&corpus, &bpe, None)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let batches =
                make_batches(pool, 2, seed).map_err(|e| CliError::Validation(e.to_string()))?;
            let batch = batches
                .iter()
                .find(|b| {
                    b.anchors
                        .iter()
                        .any(|a| a.labels.iter().any(|l| *l != mvcode_core::TypeLabel::O))
                })
                .ok_or_else(|| CliError::Validation("no labeled batch available".into()))?;
            let encoder_config = mvcode_core::model::EncoderConfig {
                vocab_size: bpe.vocab_size(),
                hidden: 8,
                layers: 1,
                heads: 2,
                feed_forward: 16,
                max_positions: 256,
                seed,
                ..Default::default()
            };
            let state = ModelState::init(encoder_config)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let reports = grad_check(&state, batch, seed, config.loss_lambda, samples, seed)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let mut worst = 0.0f64;
            for r in &reports {
                println!(
                    "{:>6}: {} parameters checked, max relative error {:.3e}",
                    r.component, r.checked, r.max_rel_err
                );
                worst = worst.max(r.max_rel_err);
            }
            if worst >= 1e-3 {
                return Err(CliError::Validation(format!(
                    "gradient check failed: max relative error {worst:.3e} >= 1e-3"
                )));
            }
            println!("all gradients within 1e-3 of finite differences");
            Ok(())
        }
        Command::Synth { samples, out } => {
            let records = synth_corpus(samples, seed);
            let mut text = String::new();
            for r in &records {
                text.push_str(&serde_json::to_string(r).expect("records serialize"));
                text.push('\n');
            }
            write_file(&out, &text)?;
            println!("wrote {} synthetic records to {}", records.len(), out.display());
            Ok(())
        }
    }
}

fn load_views(path: &Path) -> Result<ViewCorpus, CliError> {
    let text = read_to_string(path)?;
    ViewCorpus::from_jsonl(&text).map_err(|e| CliError::Validation(e.to_string()))
}

fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// NL->PL retrieval: every paired sample queries with its comment against a
/// pool of programs containing the true one.
fn nl_to_pl_queries(
    corpus: &ViewCorpus,
    bpe: &BpeModel,
    pool_size: usize,
    seed: u64,
) -> Result<Vec<RetrievalQuery>, CliError> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let samples = corpus.sample_views(bpe);
    let paired: Vec<usize> =
        (0..samples.len()).filter(|&i| samples[i].nl.is_some()).collect();
    if paired.is_empty() {
        return Err(CliError::Validation("no paired samples to evaluate".into()));
    }
    let pl_ids: Vec<Vec<u32>> = samples
        .iter()
        .map(|s| assemble_single(&s.pl, bpe).map(|seq| seq.ids))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::new();
    for &i in &paired {
        let nl = samples[i].nl.as_ref().unwrap();
        let query_ids = assemble_single(nl, bpe)
            .map_err(|e| CliError::Validation(e.to_string()))?
            .ids;
        // the true program plus distinct seeded distractors
        let mut pool_indices = vec![i];
        let mut tries = 0;
        while pool_indices.len() < pool_size.min(samples.len()) && tries < 10_000 {
            let j = rng.random_range(0..samples.len());
            if !pool_indices.contains(&j) {
                pool_indices.push(j);
            }
            tries += 1;
        }
        // deterministic pool order, true index tracked
        pool_indices.sort();
        let relevant = vec![pool_indices.iter().position(|&j| j == i).unwrap()];
        let candidates = pool_indices.iter().map(|&j| pl_ids[j].clone()).collect();
        queries.push(RetrievalQuery { query_ids, candidates, relevant });
    }
    Ok(queries)
}

/// PL->PT retrieval for MAP: each program queries against all transformed
/// variants; relevant = the variants of the same sample.
fn pl_to_pt_queries(
    corpus: &ViewCorpus,
    bpe: &BpeModel,
) -> Result<Vec<RetrievalQuery>, CliError> {
    let samples = corpus.sample_views(bpe);
    if samples.len() < 2 {
        return Err(CliError::Validation("need at least two samples for map".into()));
    }
    let pt_ids: Vec<Vec<u32>> = samples
        .iter()
        .map(|s| assemble_single(&s.pt, bpe).map(|seq| seq.ids))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut queries = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        let query_ids = assemble_single(&sample.pl, bpe)
            .map_err(|e| CliError::Validation(e.to_string()))?
            .ids;
        queries.push(RetrievalQuery {
            query_ids,
            candidates: pt_ids.clone(),
            relevant: vec![i],
        });
    }
    Ok(queries)
}
