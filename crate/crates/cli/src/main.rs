mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use gav_core::datagen::{dataset_stats, generate_splits};
use gav_core::diagnostics::{gradcheck_suite, TOLERANCE};
use gav_core::evaluator::{self, configure_threads, pr_curve, roc_auc, ScoredCandidate};
use gav_core::trainer::{log_csv, train_with};
use gav_core::{Checkpoint, Dataset, Model, Phase, SamplingConfig};
use serde_json::json;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "gav", version, about = "Scene text verification with guided visual attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset directory containing manifest.jsonl.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Checkpoint file; repeat for commands comparing two models.
    #[arg(long, global = true, action = clap::ArgAction::Append)]
    ckpt: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    phase: Option<u8>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long = "max-len", global = true, value_parser = clap::value_parser!(u64).range(1..))]
    max_len: Option<u64>,
    #[arg(long, global = true)]
    threshold: Option<f32>,
    #[arg(long, global = true)]
    query: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the train and test splits and their statistics.
    Datagen,
    /// Train phase 1 from scratch or finetune with hard negatives (phase 2).
    Train,
    /// Score every candidate and write the precision/recall curve.
    Eval,
    /// Precision/recall curves at several truncation lengths.
    SweepMaxlen,
    /// Robustness and bias probes.
    Probe {
        #[arg(value_enum)]
        kind: ProbeKind,
    },
    /// Positive-vs-best-negative margins of two checkpoints.
    Margin,
    /// Element-wise maximum of two checkpoints' scores.
    Ensemble,
    /// Rank images by their score against a query string.
    Search,
    /// Finite-difference check of every differentiable op.
    Gradcheck,
    /// Dataset statistics as CSV.
    Stats,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProbeKind {
    Shuffle,
    Mask,
    Subset,
}

fn usage_error(msg: &str) -> ! {
    Cli::command().error(ErrorKind::MissingRequiredArgument, msg).exit()
}

impl Cli {
    fn data(&self) -> &Path {
        self.data.as_deref().unwrap_or_else(|| usage_error("--data is required"))
    }

    fn out(&self) -> Result<PathBuf> {
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out)
    }

    fn ckpts(&self, n: usize) -> &[PathBuf] {
        if self.ckpt.len() != n {
            usage_error(&format!("expected --ckpt exactly {n} time(s)"));
        }
        &self.ckpt
    }

    fn query(&self) -> &str {
        self.query.as_deref().unwrap_or_else(|| usage_error("--query is required"))
    }
}

fn load_model(path: &Path) -> Result<Model> {
    Ok(Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?.model)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn scores_csv(rows: &[ScoredCandidate]) -> String {
    let mut s = String::from("image,candidate,label,score\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{:.6}\n", r.image, r.candidate, r.label, r.score));
    }
    s
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = cli.max_len {
        cfg.eval.max_len = Some(n as usize);
    }
    if let Some(t) = cli.threshold {
        cfg.eval.search_threshold = t;
    }
    let phase = match cli.phase {
        Some(p) => Phase::try_from(p)?,
        None => Phase::Scratch,
    };
    if let Some(s) = cli.steps {
        match phase {
            Phase::Scratch => cfg.train.steps = s,
            Phase::HardNegative => cfg.train.phase2_steps = Some(s),
        }
    }
    eprintln!("config: {}", serde_json::to_string(&cfg)?);
    configure_threads();
    let provenance = cfg.to_json();

    match &cli.command {
        Command::Datagen => {
            let out = cli.out()?;
            let splits = [("train", cfg.datagen.images), ("test", cfg.test_images)];
            let sets = generate_splits(&cfg.datagen, &out, &splits)?;
            for ((name, _), ds) in splits.iter().zip(&sets) {
                write(&out.join(format!("{name}_stats.csv")), &dataset_stats(&ds.samples).to_csv())?;
                eprintln!("{name}: {} images in {}", ds.len(), ds.root.display());
            }
        }
        Command::Stats => {
            let ds = load_dataset(cli.data())?;
            let csv = dataset_stats(&ds.samples).to_csv();
            match &cli.out {
                Some(_) => write(&cli.out()?.join("stats.csv"), &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Train => {
            let ds = load_dataset(cli.data())?;
            let out = cli.out()?;
            let init = match cli.ckpt.as_slice() {
                [] => None,
                [p] => Some(Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?),
                _ => usage_error("train takes at most one --ckpt"),
            };
            if phase == Phase::HardNegative && init.is_none() {
                usage_error("--phase 2 finetunes a checkpoint: pass --ckpt");
            }
            let mut run = train_with(&ds, &cfg.train, phase, init.as_ref(), |row| {
                eprintln!("step {} phase {} loss {:.4} accuracy {:.3}", row.step, row.phase, row.loss, row.accuracy);
            })?;
            run.checkpoint.provenance = provenance;
            let path = out.join(format!("phase{phase}.gav"));
            run.checkpoint.save(&path)?;
            write(&out.join(format!("phase{phase}_log.csv")), &log_csv(&run.log))?;
            eprintln!("wrote {}", path.display());
        }
        Command::Eval => {
            let ds = load_dataset(cli.data())?;
            let model = load_model(&cli.ckpts(1)[0])?;
            let out = cli.out()?;
            let max_len = cfg.eval.max_len.unwrap_or(model.config.max_len);
            let scored = evaluator::score_dataset(&ds, &model, max_len)?;
            let curve = pr_curve(&scored)?;
            write(&out.join("pr_curve.csv"), &curve.to_csv())?;
            write(&out.join("scores.csv"), &scores_csv(&scored))?;
            let sampling = SamplingConfig { shuffle_prob: 0.0, ..cfg.train.sampling.clone() };
            let acc = evaluator::pair_accuracy(&ds, &model, &sampling, Phase::Scratch, cfg.seed)?;
            let hard = evaluator::pair_accuracy(&ds, &model, &sampling, Phase::HardNegative, cfg.seed)
                .map(|c| c.balanced_accuracy())
                .ok();
            let report = json!({
                "rows": scored.len(),
                "max_len": max_len,
                "pr_auc": round4(curve.auc),
                "roc_auc": round4(roc_auc(&scored)),
                "pair_accuracy": acc.balanced_accuracy(),
                "hard_pair_accuracy": hard,
                "config": provenance,
            });
            write_json(&out.join("eval.json"), &report)?;
            println!(
                "pr_auc {:.4} roc_auc {:.4} pair_accuracy {:.4}",
                curve.auc,
                roc_auc(&scored),
                acc.balanced_accuracy()
            );
        }
        Command::SweepMaxlen => {
            let ds = load_dataset(cli.data())?;
            let model = load_model(&cli.ckpts(1)[0])?;
            let out = cli.out()?;
            let curves = evaluator::max_length_sweep(&ds, &model, &cfg.eval.sweep_lengths)?;
            let mut rows = Vec::new();
            for (n, c) in &curves {
                write(&out.join(format!("pr_curve_len{n}.csv")), &c.to_csv())?;
                println!("max_len {n}: pr_auc {:.4}", c.auc);
                rows.push(json!({"max_len": n, "pr_auc": round4(c.auc)}));
            }
            write_json(&out.join("sweep.json"), &json!({"lengths": rows, "config": provenance}))?;
        }
        Command::Probe { kind } => {
            let ds = load_dataset(cli.data())?;
            let model = load_model(&cli.ckpts(1)[0])?;
            let out = cli.out()?;
            let report = match kind {
                ProbeKind::Shuffle => {
                    let r = evaluator::probe_shuffle(&ds, &model, cfg.eval.shuffle_trials, cfg.seed)?;
                    println!("mean |delta| {:.4} rank-1 retention {:.4}", r.mean_abs_delta, r.rank1_retention);
                    json!({"probe": "shuffle", "report": r, "config": provenance})
                }
                ProbeKind::Mask => {
                    let (r, _) = evaluator::probe_masked(&ds, &model, cfg.seed)?;
                    let unmasked = roc_auc(&evaluator::score_dataset(&ds, &model, model.config.max_len)?);
                    println!("masked auc {:.4} unmasked auc {:.4}", r.masked_auc, unmasked);
                    json!({"probe": "mask", "report": r, "unmasked_auc": round4(unmasked), "config": provenance})
                }
                ProbeKind::Subset => {
                    let rows = evaluator::probe_subset(&ds, &model, cli.query.as_deref())?;
                    let lower = rows.iter().filter(|r| r.subset_score < r.positive_score).count();
                    let frac = if rows.is_empty() { 0.0 } else { lower as f64 / rows.len() as f64 };
                    for r in rows.iter().take(20) {
                        println!("{:.4} {:?} vs {:.4} {:?}", r.positive_score, r.positive, r.subset_score, r.subset);
                    }
                    println!("subsets scored below their full name: {lower}/{}", rows.len());
                    json!({"probe": "subset", "fraction_subset_lower": frac, "rows": rows, "config": provenance})
                }
            };
            let name = match kind {
                ProbeKind::Shuffle => "probe_shuffle.json",
                ProbeKind::Mask => "probe_mask.json",
                ProbeKind::Subset => "probe_subset.json",
            };
            write_json(&out.join(name), &report)?;
        }
        Command::Margin => {
            let ds = load_dataset(cli.data())?;
            let paths = cli.ckpts(2);
            let (a, b) = (load_model(&paths[0])?, load_model(&paths[1])?);
            let r = evaluator::margin_report(&ds, &a, &b)?;
            println!(
                "mean margin {:.4} -> {:.4} (delta {:.4}, {:+.1}%)",
                r.mean_margin_a,
                r.mean_margin_b,
                r.mean_delta,
                100.0 * r.relative_change
            );
            write_json(&cli.out()?.join("margin.json"), &json!({"report": r, "config": provenance}))?;
        }
        Command::Ensemble => {
            let ds = load_dataset(cli.data())?;
            let out = cli.out()?;
            let paths = cli.ckpts(2);
            let (a, b) = (load_model(&paths[0])?, load_model(&paths[1])?);
            let max_len = cfg.eval.max_len;
            let sa = evaluator::score_dataset(&ds, &a, max_len.unwrap_or(a.config.max_len))?;
            let sb = evaluator::score_dataset(&ds, &b, max_len.unwrap_or(b.config.max_len))?;
            let se = evaluator::ensemble_max(&sa, &sb)?;
            let mut aucs = Vec::new();
            for (name, s) in [("a", &sa), ("b", &sb), ("ensemble", &se)] {
                let c = pr_curve(s)?;
                write(&out.join(format!("pr_curve_{name}.csv")), &c.to_csv())?;
                println!("{name}: pr_auc {:.4}", c.auc);
                aucs.push(round4(c.auc));
            }
            let report =
                json!({"pr_auc_a": aucs[0], "pr_auc_b": aucs[1], "pr_auc_ensemble": aucs[2], "config": provenance});
            write_json(&out.join("ensemble.json"), &report)?;
        }
        Command::Search => {
            let ds = load_dataset(cli.data())?;
            let model = load_model(&cli.ckpts(1)[0])?;
            let hits = evaluator::image_search(cli.query(), &ds, &model, cfg.eval.search_threshold)?;
            let text = evaluator::search_lines(&hits);
            print!("{text}");
            if cli.out.is_some() {
                write(&cli.out()?.join("search.txt"), &text)?;
            }
        }
        Command::Gradcheck => {
            let rows = gradcheck_suite(10)?;
            let mut ok = true;
            for r in &rows {
                println!("{:<20} {:.3e} {}", r.name, r.max_error, if r.passed() { "ok" } else { "FAIL" });
                ok &= r.passed();
            }
            if !ok {
                bail!("gradient check failed: some relative error is not below {TOLERANCE:e}");
            }
        }
    }
    Ok(())
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
