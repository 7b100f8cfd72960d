use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use polysemy::cli::{self, LabelKind, Resources, RunConfig};
use polysemy::grassmeans::SenseModel;
use polysemy::lexeme::{LineupMode, SimMode};

#[derive(Parser)]
#[command(
    name = "polysemy",
    version,
    about = "Sense induction and disambiguation with context subspaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    embeddings: Option<String>,
    #[arg(long, global = true)]
    frequencies: Option<String>,
    #[arg(long, global = true)]
    stopwords: Option<String>,
    #[arg(long, global = true)]
    corpus: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    rank: Option<usize>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(short, long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads (default: all cores). Does not affect outputs.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        let pairs: [(&str, Option<String>); 12] = [
            ("embeddings", self.embeddings.clone()),
            ("frequencies", self.frequencies.clone()),
            ("stopwords", self.stopwords.clone()),
            ("corpus", self.corpus.clone()),
            ("out", self.out.clone()),
            ("rank", self.rank.map(|v| v.to_string())),
            ("window", self.window.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("theta", self.theta.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("restarts", self.restarts.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the contexts of a target word into K senses.
    Induce {
        target: String,
        #[command(flatten)]
        common: Common,
    },
    /// Decode one occurrence; prints a TSV row.
    Disambiguate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sentence: String,
        /// 0-based token index of the target.
        #[arg(long)]
        position: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Rewrite the corpus with sense-tagged tokens.
    Label {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        soft: bool,
        #[command(flatten)]
        common: Common,
    },
    /// V-measure and paired F-score against a gold TSV.
    EvalWsi {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Spearman correlation on a contextual similarity dataset.
    EvalScws {
        #[arg(long)]
        lexemes: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "hard")]
        mode: SimMode,
        #[arg(long)]
        lite: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Precision/recall curve on the sense lineup task.
    Lineup {
        #[arg(long)]
        lexemes: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value_t = 6)]
        max_k: usize,
        #[arg(long)]
        p: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Merge monosemous words and measure how well they separate again.
    SynthMerge {
        #[arg(long)]
        monosemous: PathBuf,
        /// Comma-separated list of K values.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Variance captured by low-rank context subspaces.
    LowrankStudy {
        #[arg(long, default_value_t = 100)]
        sample: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Distance of a word to its own versus random context subspaces.
    IntersectStudy {
        target: String,
        #[arg(long)]
        random_contexts: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Induce { common, .. }
            | Command::Disambiguate { common, .. }
            | Command::Label { common, .. }
            | Command::EvalWsi { common, .. }
            | Command::EvalScws { common, .. }
            | Command::Lineup { common, .. }
            | Command::SynthMerge { common, .. }
            | Command::LowrankStudy { common, .. }
            | Command::IntersectStudy { common, .. } => common,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker pool")?;
    }
    let mut cfg = common.resolve()?;
    let res = Resources::load(&cfg)?;
    match &cli.command {
        Command::Induce { target, .. } => {
            let out = cli::cmd_induce(&cfg, &res, target)?;
            eprintln!(
                "{}: {} contexts, objective {:.6}, wrote {}",
                out.model.target,
                out.contexts,
                out.model.objective,
                out.model_path.display()
            );
        }
        Command::Disambiguate {
            model,
            sentence,
            position,
            ..
        } => {
            let m = SenseModel::load(model)?;
            print!(
                "{}",
                cli::cmd_disambiguate(&cfg, &res, &m, sentence, *position)?
            );
        }
        Command::Label { models, soft, .. } => {
            let kind = if *soft {
                LabelKind::Soft
            } else {
                LabelKind::Hard
            };
            let report = cli::cmd_label(&cfg, &res, models, kind)?;
            eprintln!(
                "labeled {} target(s) into {}",
                report.targets.len(),
                cfg.out.display()
            );
        }
        Command::EvalWsi { models, gold, .. } => {
            let out = cli::cmd_eval_wsi(&cfg, &res, models, gold)?;
            print!("{}", cli::wsi_table(&out));
            for (t, n) in &out.excluded {
                eprintln!("excluded {n} instance(s) of {t:?}: no model");
            }
        }
        Command::EvalScws {
            lexemes,
            models,
            dataset,
            mode,
            lite,
            ..
        } => {
            let r = cli::cmd_eval_scws(
                &cfg,
                &res,
                lexemes.as_deref(),
                models.as_deref(),
                dataset,
                *mode,
                *lite,
            )?;
            println!(
                "spearman\t{:.2}\tevaluated\t{}",
                100.0 * r.spearman,
                r.evaluated
            );
        }
        Command::Lineup {
            lexemes,
            dataset,
            baseline,
            max_k,
            p,
            ..
        } => {
            if let Some(p) = p {
                cfg.set("p", &p.to_string())?;
                cfg.validate()?;
            }
            let mode = if *baseline {
                LineupMode::Baseline
            } else {
                LineupMode::Lexeme
            };
            for c in cli::cmd_lineup(&cfg, &res, lexemes.as_deref(), dataset, mode, *max_k)? {
                println!(
                    "{}\t{:.2}\t{:.2}",
                    c.k,
                    100.0 * c.precision,
                    100.0 * c.recall
                );
            }
        }
        Command::SynthMerge {
            monosemous,
            ks,
            trials,
            ..
        } => {
            for r in cli::cmd_synth_merge(&cfg, &res, monosemous, ks, *trials)? {
                println!(
                    "{}\t{}\t{:.4}\t{:.4}",
                    r.k, r.trials, r.mean_accuracy, r.std_accuracy
                );
            }
        }
        Command::LowrankStudy { sample, .. } => {
            let out = cli::cmd_lowrank_study(&cfg, &res, *sample)?;
            for (n, r) in cli::LOWRANK_RANKS.iter().zip(&out.ratios) {
                let (m, s) = cli::mean_std(r);
                println!("rank{n}\t{}\t{m:.4}\t{s:.4}", r.len());
            }
        }
        Command::IntersectStudy {
            target,
            random_contexts,
            ..
        } => {
            let out = cli::cmd_intersect_study(&cfg, &res, target, *random_contexts)?;
            let ((om, os), (rm, rs)) = (out.own_stats(), out.random_stats());
            println!("own\t{}\t{om:.4}\t{os:.4}", out.own.len());
            println!("random\t{}\t{rm:.4}\t{rs:.4}", out.random.len());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
