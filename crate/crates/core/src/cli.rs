//! Experiment commands. Each command resolves a [`RunConfig`], does its work
//! through the library modules, writes TSV/JSON outputs plus a resolved-config
//! snapshot into the output directory, and returns what it wrote.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;

use crate::context::{self, ContextInstance, WindowOptions};
use crate::disambig::{
    self, LabelMode, LabelOptions, LabelReport, Labeler, SenseLabel, SoftAssignment,
};
use crate::embeddings::{self, EmbeddingTable, LoadOptions, StopwordSet};
use crate::error::{Error, Result};
use crate::grassmeans::{self, Aggregation, KGrassmeansParams, MergeParams, SenseModel};
use crate::lexeme::{
    self, Background, LexemeTable, LineupMode, LineupScoring, ScwsOptions, ScwsReport, SimMode,
    SimilarityModel,
};
use crate::linalg;
use crate::metrics::{self, MacroScores, TargetScores};

/// Environment variable that `$FIXTURES/` path prefixes expand to.
pub const FIXTURES_ENV: &str = "POLYSEMY_FIXTURES";

/// All tunable settings. Precedence: defaults, then config file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rank: usize,
    pub window: usize,
    pub k: usize,
    pub theta: f64,
    pub beta: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// 0 means no cap.
    pub max_instances: usize,
    pub lowercase: bool,
    pub separator: String,
    pub aggregation: Aggregation,
    pub centered: bool,
    pub include_target: bool,
    pub min_freq: u64,
    pub background_size: usize,
    pub p: f64,
    pub collapse_duplicates: bool,
    pub embeddings: Option<PathBuf>,
    pub frequencies: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rank: 3,
            window: 10,
            k: 2,
            theta: 0.6,
            beta: 10.0,
            restarts: 10,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
            max_instances: 0,
            lowercase: true,
            separator: "#".into(),
            aggregation: Aggregation::Unweighted,
            centered: false,
            include_target: false,
            min_freq: 0,
            background_size: 10_000,
            p: 2.0,
            collapse_duplicates: true,
            embeddings: None,
            frequencies: None,
            stopwords: None,
            corpus: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("invalid value {value:?} for {key}")))
}

fn expand_path(value: &str) -> PathBuf {
    match value.strip_prefix("$FIXTURES/") {
        Some(rest) => {
            let root = std::env::var(FIXTURES_ENV).unwrap_or_else(|_| "fixtures".into());
            Path::new(&root).join(rest)
        }
        None => PathBuf::from(value),
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 24] = [
        "rank",
        "window",
        "k",
        "theta",
        "beta",
        "restarts",
        "seed",
        "max_iters",
        "tol",
        "max_instances",
        "lowercase",
        "separator",
        "aggregation",
        "centered",
        "include_target",
        "min_freq",
        "background_size",
        "p",
        "collapse_duplicates",
        "embeddings",
        "frequencies",
        "stopwords",
        "corpus",
        "out",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "rank" => self.rank = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "restarts" => self.restarts = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "max_instances" => self.max_instances = parse(key, value)?,
            "lowercase" => self.lowercase = parse(key, value)?,
            "separator" => self.separator = value.to_string(),
            "aggregation" => {
                self.aggregation = match value {
                    "unweighted" => Aggregation::Unweighted,
                    "energy_weighted" => Aggregation::EnergyWeighted,
                    _ => return Err(Error::invalid(format!("invalid aggregation {value:?}"))),
                }
            }
            "centered" => self.centered = parse(key, value)?,
            "include_target" => self.include_target = parse(key, value)?,
            "min_freq" => self.min_freq = parse(key, value)?,
            "background_size" => self.background_size = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "collapse_duplicates" => self.collapse_duplicates = parse(key, value)?,
            "embeddings" => self.embeddings = Some(expand_path(value)),
            "frequencies" => self.frequencies = Some(expand_path(value)),
            "stopwords" => self.stopwords = Some(expand_path(value)),
            "corpus" => self.corpus = Some(expand_path(value)),
            "out" => self.out = expand_path(value),
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` document. Lines starting with `#` and
    /// blank lines are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected key = value"))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0
            || self.window == 0
            || self.k == 0
            || self.restarts == 0
            || self.max_iters == 0
        {
            return Err(Error::invalid(
                "rank, window, k, restarts and max_iters must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid("theta must lie in [0, 1]"));
        }
        if self.beta.is_nan() || self.beta <= 0.0 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid("beta and tol must be positive"));
        }
        if self.p.is_nan() || self.p < 1.0 {
            return Err(Error::invalid("p must be at least 1"));
        }
        Ok(())
    }

    /// Every setting except the output directory, one `key = value` per line,
    /// in a fixed order. Feeding it back through [`RunConfig::apply_text`]
    /// reproduces the run.
    pub fn snapshot(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut s = String::new();
        for key in Self::KEYS {
            let v = match key {
                "rank" => Some(self.rank.to_string()),
                "window" => Some(self.window.to_string()),
                "k" => Some(self.k.to_string()),
                "theta" => Some(self.theta.to_string()),
                "beta" => Some(self.beta.to_string()),
                "restarts" => Some(self.restarts.to_string()),
                "seed" => Some(self.seed.to_string()),
                "max_iters" => Some(self.max_iters.to_string()),
                "tol" => Some(self.tol.to_string()),
                "max_instances" => Some(self.max_instances.to_string()),
                "lowercase" => Some(self.lowercase.to_string()),
                "separator" => Some(self.separator.clone()),
                "aggregation" => Some(
                    match self.aggregation {
                        Aggregation::Unweighted => "unweighted",
                        Aggregation::EnergyWeighted => "energy_weighted",
                    }
                    .to_string(),
                ),
                "centered" => Some(self.centered.to_string()),
                "include_target" => Some(self.include_target.to_string()),
                "min_freq" => Some(self.min_freq.to_string()),
                "background_size" => Some(self.background_size.to_string()),
                "p" => Some(self.p.to_string()),
                "collapse_duplicates" => Some(self.collapse_duplicates.to_string()),
                "embeddings" => path(&self.embeddings),
                "frequencies" => path(&self.frequencies),
                "stopwords" => path(&self.stopwords),
                "corpus" => path(&self.corpus),
                _ => None,
            };
            if let Some(v) = v {
                writeln!(s, "{key} = {v}").unwrap();
            }
        }
        s
    }

    pub fn window_options(&self) -> WindowOptions {
        WindowOptions {
            window: self.window,
            lowercase: self.lowercase,
            include_target: self.include_target,
        }
    }

    pub fn kgrassmeans(&self) -> KGrassmeansParams {
        KGrassmeansParams {
            k: self.k,
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
            aggregation: self.aggregation,
        }
    }

    fn max_instances(&self) -> Option<usize> {
        (self.max_instances > 0).then_some(self.max_instances)
    }

    fn corpus(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::invalid("no corpus configured"))
    }

    fn write_output(&self, name: &str, contents: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let p = self.out.join(name);
        std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn write_snapshot(&self, command: &str) -> Result<PathBuf> {
        self.write_output(&format!("{command}.resolved.conf"), &self.snapshot())
    }
}

/// Embeddings and stopwords loaded per the config.
pub struct Resources {
    pub table: EmbeddingTable,
    pub stopwords: StopwordSet,
}

impl Resources {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let path = cfg
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::invalid("no embeddings configured"))?;
        let mut table = EmbeddingTable::load(
            path,
            LoadOptions {
                lowercase: cfg.lowercase,
            },
        )?;
        if let Some(f) = &cfg.frequencies {
            table.load_frequencies(f, cfg.lowercase)?;
        }
        let stopwords = match &cfg.stopwords {
            Some(p) => StopwordSet::load(p, cfg.lowercase)?,
            None => StopwordSet::english(),
        };
        Ok(Resources { table, stopwords })
    }
}

fn file_stem_for(target: &str) -> String {
    target
        .chars()
        .map(|c| {
            if c == '/' || c == '\\' || c.is_control() {
                '_'
            } else {
                c
            }
        })
        .collect()
}

pub fn model_file_name(target: &str) -> String {
    format!("{}.model.json", file_stem_for(target))
}

/// Loads every `*.model.json` in `dir`, keyed by target.
pub fn load_models(dir: &Path) -> Result<BTreeMap<String, SenseModel>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".model.json"))
        .collect();
    paths.sort();
    let mut models = BTreeMap::new();
    for p in paths {
        let m = SenseModel::load(&p)?;
        models.insert(m.target.clone(), m);
    }
    Ok(models)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect())
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

#[derive(Debug, Clone)]
pub struct InduceOutput {
    pub model: SenseModel,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
    pub contexts: usize,
}

/// Extract contexts of `target`, cluster them and write the model plus a
/// per-cluster sample of the closest sentences.
pub fn cmd_induce(cfg: &RunConfig, res: &Resources, target: &str) -> Result<InduceOutput> {
    cfg.validate()?;
    let corpus = cfg.corpus()?;
    let target = context::normalize_token(target, cfg.lowercase);
    let instances = context::extract_contexts(
        corpus,
        &target,
        &cfg.window_options(),
        &res.table,
        &res.stopwords,
        cfg.max_instances(),
    )?;
    let mut kept: Vec<&ContextInstance> = Vec::new();
    let mut subspaces = Vec::new();
    for inst in &instances {
        if let Ok(s) =
            context::context_subspace_with(&inst.tokens, &res.table, cfg.rank, cfg.centered)
        {
            subspaces.push(s);
            kept.push(inst);
        }
    }
    if subspaces.len() < cfg.k {
        return Err(Error::invalid(format!(
            "{target:?} has {} usable contexts, fewer than k = {}",
            subspaces.len(),
            cfg.k
        )));
    }
    let params = cfg.kgrassmeans();
    let clustering = grassmeans::k_grassmeans(&subspaces, &params)?;
    let ids: Vec<String> = kept.iter().map(|i| i.instance_id.clone()).collect();

    let lines = read_lines(corpus)?;
    let mut per_cluster: Vec<Vec<(f64, usize)>> = vec![Vec::new(); cfg.k];
    for (i, (s, &c)) in subspaces.iter().zip(&clustering.assignments).enumerate() {
        per_cluster[c].push((s.distance_to_unit(&clustering.directions[c]), i));
    }
    let mut report = String::from("cluster\tinstance_id\tdistance\tsentence\n");
    for (c, members) in per_cluster.iter_mut().enumerate() {
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, i) in members.iter().take(5) {
            let sentence = lines.get(kept[i].line - 1).map_or("", String::as_str);
            writeln!(report, "{}\t{}\t{d:.4}\t{sentence}", c + 1, ids[i]).unwrap();
        }
    }

    let model = clustering.into_model(&target, cfg.rank, cfg.window, &params, Some(&ids));
    let model_path = cfg.write_output(&model_file_name(&target), &model.to_json()?)?;
    let report_path =
        cfg.write_output(&format!("{}.clusters.tsv", file_stem_for(&target)), &report)?;
    cfg.write_snapshot("induce")?;
    Ok(InduceOutput {
        model,
        model_path,
        report_path,
        contexts: subspaces.len(),
    })
}

/// One TSV row (with header) describing the hard and soft decoding of the
/// token at `position`.
pub fn cmd_disambiguate(
    cfg: &RunConfig,
    res: &Resources,
    model: &SenseModel,
    sentence: &str,
    position: usize,
) -> Result<String> {
    cfg.validate()?;
    let tokens: Vec<String> = sentence
        .split_whitespace()
        .map(|t| context::normalize_token(t, cfg.lowercase))
        .collect();
    if position >= tokens.len() {
        return Err(Error::invalid(format!(
            "position {position} out of range for a sentence of {} tokens",
            tokens.len()
        )));
    }
    let mut out = String::from("target\tposition\tk_star\tdistance\tlabel");
    for k in 1..=model.k {
        write!(out, "\tp{k}").unwrap();
    }
    out.push('\n');
    let (k_star, distance, label, probs) = match disambig::context_for(
        model,
        &tokens,
        position,
        cfg.lowercase,
        &res.table,
        &res.stopwords,
    ) {
        Some(s) => {
            let (label, d) = disambig::hard_label(model, &s, cfg.theta)?;
            let (k, _) = disambig::hard_decode(model, &s)?;
            let p = disambig::soft_decode(model, &s, cfg.beta)?;
            ((k + 1).to_string(), format!("{d:.6}"), label, p)
        }
        None => (
            "IDK".into(),
            "NA".into(),
            SenseLabel::Idk,
            SoftAssignment::uniform(model.k),
        ),
    };
    write!(
        out,
        "{}\t{position}\t{k_star}\t{distance}\t{label}",
        model.target
    )
    .unwrap();
    for p in &probs.probs {
        write!(out, "\t{p:.6}").unwrap();
    }
    out.push('\n');
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Hard,
    Soft,
}

/// Label the configured corpus with every model in `models_dir`.
pub fn cmd_label(
    cfg: &RunConfig,
    res: &Resources,
    models_dir: &Path,
    kind: LabelKind,
) -> Result<LabelReport> {
    cfg.validate()?;
    let models = load_models(models_dir)?;
    let mode = match kind {
        LabelKind::Hard => LabelMode::Hard { theta: cfg.theta },
        LabelKind::Soft => LabelMode::Soft {
            beta: cfg.beta,
            seed: cfg.seed,
        },
    };
    let opts = LabelOptions {
        mode,
        lowercase: cfg.lowercase,
        separator: cfg.separator.clone(),
    };
    let labeler = Labeler::new(&models, &res.table, &res.stopwords, opts)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let report = labeler.label_file(cfg.corpus()?, cfg.out.join("labeled.txt"))?;
    cfg.write_output("label_report.json", &report.to_json()?)?;
    cfg.write_snapshot("label")?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct WsiOutput {
    pub per_target: Vec<TargetScores>,
    pub macro_scores: Option<MacroScores>,
    /// Gold instances whose target has no model.
    pub excluded: BTreeMap<String, usize>,
}

/// Decode every gold instance (nearest sense; erasure when the context is
/// empty) and score each target's contingency table.
pub fn evaluate_wsi(
    cfg: &RunConfig,
    res: &Resources,
    models: &BTreeMap<String, SenseModel>,
    gold: &[metrics::GoldInstance],
) -> Result<WsiOutput> {
    let mut by_target: BTreeMap<String, (Vec<String>, Vec<SenseLabel>)> = BTreeMap::new();
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();
    for g in gold {
        let target = context::normalize_token(&g.target, cfg.lowercase);
        let Some(model) = models.get(&target) else {
            *excluded.entry(target).or_default() += 1;
            continue;
        };
        let tokens: Vec<String> = g
            .sentence
            .split_whitespace()
            .map(|t| context::normalize_token(t, cfg.lowercase))
            .collect();
        if g.target_position >= tokens.len() {
            return Err(Error::invalid(format!(
                "instance {}: target position {} out of range",
                g.instance_id, g.target_position
            )));
        }
        let label = match disambig::context_for(
            model,
            &tokens,
            g.target_position,
            cfg.lowercase,
            &res.table,
            &res.stopwords,
        ) {
            Some(s) => SenseLabel::Sense(disambig::hard_decode(model, &s)?.0),
            None => SenseLabel::Idk,
        };
        let entry = by_target.entry(target).or_default();
        entry.0.push(g.gold_sense.clone());
        entry.1.push(label);
    }
    let per_target = by_target
        .iter()
        .map(|(t, (gold, pred))| {
            Ok(TargetScores::from_table(
                t,
                &metrics::build_contingency(gold, pred)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WsiOutput {
        macro_scores: metrics::macro_average(&per_target),
        per_target,
        excluded,
    })
}

pub fn wsi_table(out: &WsiOutput) -> String {
    let mut s = String::from("target\tinstances\tclusters\tv_measure\thomogeneity\tcompleteness\tpaired_f\tprecision\trecall\n");
    let row = |s: &mut String,
               name: &str,
               n: usize,
               clusters: String,
               v: &metrics::VMeasure,
               f: &metrics::PairedF| {
        writeln!(
            s,
            "{name}\t{n}\t{clusters}\t{}\t{}\t{}\t{}\t{}\t{}",
            pct(v.v),
            pct(v.homogeneity),
            pct(v.completeness),
            pct(f.f),
            pct(f.precision),
            pct(f.recall)
        )
        .unwrap();
    };
    for t in &out.per_target {
        row(
            &mut s,
            &t.target,
            t.instances,
            t.clusters.to_string(),
            &t.v,
            &t.f,
        );
    }
    if let Some(m) = &out.macro_scores {
        row(
            &mut s,
            "MACRO",
            m.instances,
            format!("{:.2}", m.mean_clusters),
            &m.v,
            &m.f,
        );
    }
    s
}

pub fn cmd_eval_wsi(
    cfg: &RunConfig,
    res: &Resources,
    models_dir: &Path,
    gold_path: &Path,
) -> Result<WsiOutput> {
    cfg.validate()?;
    let models = load_models(models_dir)?;
    let file = File::open(gold_path).map_err(|e| Error::io(gold_path, e))?;
    let gold = metrics::read_gold(BufReader::new(file), gold_path)?;
    let out = evaluate_wsi(cfg, res, &models, &gold)?;
    cfg.write_output("wsi_scores.tsv", &wsi_table(&out))?;
    let mut ex = String::from("target\tinstances\n");
    for (t, n) in &out.excluded {
        writeln!(ex, "{t}\t{n}").unwrap();
    }
    cfg.write_output("wsi_excluded.tsv", &ex)?;
    cfg.write_snapshot("eval-wsi")?;
    Ok(out)
}

pub fn cmd_eval_scws(
    cfg: &RunConfig,
    res: &Resources,
    lexemes_path: Option<&Path>,
    models_dir: Option<&Path>,
    dataset: &Path,
    mode: SimMode,
    lite: bool,
) -> Result<ScwsReport> {
    cfg.validate()?;
    let models = match models_dir {
        Some(d) => load_models(d)?,
        None if mode == SimMode::Global => BTreeMap::new(),
        None => {
            return Err(Error::invalid(
                "hard and soft modes need a models directory",
            ))
        }
    };
    let lexemes = match lexemes_path {
        Some(p) => lexeme::load_lexemes(p, &res.table, &cfg.separator, cfg.lowercase)?,
        None if mode == SimMode::Global => LexemeTable::new(res.table.dim()),
        None => return Err(Error::invalid("hard and soft modes need a lexeme file")),
    };
    let file = File::open(dataset).map_err(|e| Error::io(dataset, e))?;
    let rows = lexeme::read_scws(BufReader::new(file), dataset)?;
    let sim = SimilarityModel {
        table: &res.table,
        stopwords: &res.stopwords,
        models: &models,
        lexemes: &lexemes,
        lowercase: cfg.lowercase,
    };
    let report = lexeme::scws_eval(
        &rows,
        &sim,
        &ScwsOptions {
            mode,
            beta: cfg.beta,
            lite_only: lite,
        },
    )?;
    let mode_name = match mode {
        SimMode::Hard => "hard",
        SimMode::Soft => "soft",
        SimMode::Global => "global",
    };
    let mut s =
        String::from("mode\tlite\tevaluated\tskipped_unmarked\tskipped_oov\tfallbacks\tspearman\n");
    writeln!(
        s,
        "{mode_name}\t{}\t{}\t{}\t{}\t{}\t{}",
        u8::from(lite),
        report.evaluated,
        report.skipped_unmarked,
        report.skipped_oov,
        report.fallbacks,
        pct(report.spearman)
    )
    .unwrap();
    cfg.write_output("scws.tsv", &s)?;
    let mut rows_out = String::from("id\tscore\n");
    for (id, x) in &report.scores {
        writeln!(rows_out, "{id}\t{x:.6}").unwrap();
    }
    cfg.write_output("scws_scores.tsv", &rows_out)?;
    cfg.write_snapshot("eval-scws")?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    pub targets: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Mean precision/recall over lineup targets for k = 1..=max_k. Targets
/// without lexemes fall back to the baseline in lexeme mode.
pub fn cmd_lineup(
    cfg: &RunConfig,
    res: &Resources,
    lexemes_path: Option<&Path>,
    dataset: &Path,
    mode: LineupMode,
    max_k: usize,
) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let file = File::open(dataset).map_err(|e| Error::io(dataset, e))?;
    let groups = lexeme::read_lineup(BufReader::new(file), dataset, cfg.lowercase)?;
    let lexemes = match (mode, lexemes_path) {
        (LineupMode::Lexeme, Some(p)) => Some(lexeme::load_lexemes(
            p,
            &res.table,
            &cfg.separator,
            cfg.lowercase,
        )?),
        (LineupMode::Lexeme, None) => {
            return Err(Error::invalid("lexeme mode needs a lexeme file"))
        }
        _ => None,
    };
    let background = Background::sample(&res.table, cfg.background_size, cfg.seed);
    let scoring = LineupScoring {
        table: &res.table,
        background: Some(&background),
        p: cfg.p,
    };
    let mut curve = Vec::new();
    let mut fallbacks = 0usize;
    for k in 1..=max_k {
        let (mut p_sum, mut r_sum, mut n) = (0.0, 0.0, 0usize);
        for (target, senses) in &groups {
            if k > senses.len() {
                continue;
            }
            let has_lexemes = lexemes
                .as_ref()
                .is_some_and(|l| !l.senses_of(target).is_empty());
            let m = if mode == LineupMode::Lexeme && has_lexemes {
                LineupMode::Lexeme
            } else {
                if mode == LineupMode::Lexeme && k == 1 {
                    fallbacks += 1;
                }
                LineupMode::Baseline
            };
            let r = lexeme::lineup_task(
                target,
                senses,
                k,
                m,
                &scoring,
                lexemes.as_ref(),
                cfg.collapse_duplicates,
            )?;
            p_sum += r.precision;
            r_sum += r.recall;
            n += 1;
        }
        if n > 0 {
            curve.push(CurvePoint {
                k,
                targets: n,
                precision: p_sum / n as f64,
                recall: r_sum / n as f64,
            });
        }
    }
    let mut s = String::from("k\ttargets\tprecision\trecall\n");
    for c in &curve {
        writeln!(
            s,
            "{}\t{}\t{}\t{}",
            c.k,
            c.targets,
            pct(c.precision),
            pct(c.recall)
        )
        .unwrap();
    }
    cfg.write_output("lineup_curve.tsv", &s)?;
    if fallbacks > 0 {
        eprintln!("lineup: {fallbacks} target(s) without lexemes scored with the baseline");
    }
    cfg.write_snapshot("lineup")?;
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeRow {
    pub k: usize,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Merge `k` randomly chosen monosemous words per trial and report how well
/// K-Grassmeans separates them again.
pub fn cmd_synth_merge(
    cfg: &RunConfig,
    res: &Resources,
    monosemous: &Path,
    ks: &[usize],
    trials: usize,
) -> Result<Vec<MergeRow>> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    if !res.table.has_frequencies() {
        return Err(Error::NoFrequencies);
    }
    let pool: Vec<String> = read_lines(monosemous)?
        .into_iter()
        .map(|w| context::normalize_token(w.trim(), cfg.lowercase))
        .filter(|w| !w.is_empty() && res.table.frequency(w).is_some_and(|f| f > cfg.min_freq))
        .collect();
    let corpus = cfg.corpus()?;
    let mut rows = Vec::new();
    for &k in ks {
        if k == 0 || k > pool.len() {
            return Err(Error::NotEnoughCandidates {
                needed: k,
                available: pool.len(),
            });
        }
        let mut accs = Vec::with_capacity(trials);
        for trial in 0..trials {
            let mut rng = linalg::rng_for(&[cfg.seed, k as u64, trial as u64, 0x6d72_6765]);
            let words: Vec<String> = index::sample(&mut rng, pool.len(), k)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect();
            let params = MergeParams {
                window: cfg.window_options(),
                rank: cfg.rank,
                max_instances: cfg.max_instances(),
                kgrassmeans: KGrassmeansParams {
                    seed: linalg::mix_seed(&[cfg.seed, k as u64, trial as u64]),
                    ..cfg.kgrassmeans()
                },
            };
            accs.push(
                grassmeans::synth_merge_experiment(
                    &words,
                    corpus,
                    &res.table,
                    &res.stopwords,
                    &params,
                )?
                .accuracy,
            );
        }
        let (mean, std) = mean_std(&accs);
        rows.push(MergeRow {
            k,
            trials,
            mean_accuracy: mean,
            std_accuracy: std,
        });
    }
    let mut s = String::from("k\ttrials\tmean_accuracy\tstd_accuracy\n");
    for r in &rows {
        writeln!(
            s,
            "{}\t{}\t{:.6}\t{:.6}",
            r.k, r.trials, r.mean_accuracy, r.std_accuracy
        )
        .unwrap();
    }
    cfg.write_output("synth_merge.tsv", &s)?;
    cfg.write_snapshot("synth-merge")?;
    Ok(rows)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

pub const LOWRANK_RANKS: [usize; 3] = [3, 4, 5];
const BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LowrankOutput {
    pub words: Vec<String>,
    /// Variance ratios per entry of [`LOWRANK_RANKS`].
    pub ratios: Vec<Vec<f64>>,
}

/// Variance captured by rank-3/4/5 PCA over the contexts of `sample`
/// frequent words.
pub fn cmd_lowrank_study(cfg: &RunConfig, res: &Resources, sample: usize) -> Result<LowrankOutput> {
    cfg.validate()?;
    let words = embeddings::sample_frequent_words(&res.table, cfg.min_freq, sample, cfg.seed)?;
    let corpus = cfg.corpus()?;
    let mut ratios = vec![Vec::new(); LOWRANK_RANKS.len()];
    for w in &words {
        for inst in context::extract_contexts(
            corpus,
            w,
            &cfg.window_options(),
            &res.table,
            &res.stopwords,
            cfg.max_instances(),
        )? {
            for (slot, &n) in LOWRANK_RANKS.iter().enumerate() {
                if let Ok(r) =
                    context::variance_ratio_with(&inst.tokens, &res.table, n, cfg.centered)
                {
                    ratios[slot].push(r);
                }
            }
        }
    }
    let hists: Vec<Vec<usize>> = ratios.iter().map(|r| histogram(r, BINS)).collect();
    let mut s = String::from("bin_lo\tbin_hi");
    for n in LOWRANK_RANKS {
        write!(s, "\trank{n}").unwrap();
    }
    s.push('\n');
    for b in 0..BINS {
        write!(
            s,
            "{:.2}\t{:.2}",
            b as f64 / BINS as f64,
            (b + 1) as f64 / BINS as f64
        )
        .unwrap();
        for h in &hists {
            write!(s, "\t{}", h[b]).unwrap();
        }
        s.push('\n');
    }
    cfg.write_output("lowrank_hist.tsv", &s)?;
    let mut summary = String::from("rank\tcontexts\tmean\tstd\n");
    for (slot, n) in LOWRANK_RANKS.iter().enumerate() {
        let (m, sd) = mean_std(&ratios[slot]);
        writeln!(summary, "{n}\t{}\t{m:.6}\t{sd:.6}", ratios[slot].len()).unwrap();
    }
    cfg.write_output("lowrank_summary.tsv", &summary)?;
    cfg.write_snapshot("lowrank-study")?;
    Ok(LowrankOutput { words, ratios })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectOutput {
    pub own: Vec<f64>,
    pub random: Vec<f64>,
}

impl IntersectOutput {
    pub fn own_stats(&self) -> (f64, f64) {
        mean_std(&self.own)
    }

    pub fn random_stats(&self) -> (f64, f64) {
        mean_std(&self.random)
    }
}

/// Projection similarity `sqrt(1 - d^2)` between the target's unit vector and
/// (a) its own context subspaces, (b) contexts around random corpus positions.
pub fn cmd_intersect_study(
    cfg: &RunConfig,
    res: &Resources,
    target: &str,
    random_contexts: Option<usize>,
) -> Result<IntersectOutput> {
    cfg.validate()?;
    let target = context::normalize_token(target, cfg.lowercase);
    let v = res
        .table
        .vector(&target)
        .ok_or_else(|| Error::NotInVocabulary(target.clone()))?;
    let u = linalg::normalized(v).ok_or(Error::ZeroVector)?;
    let corpus = cfg.corpus()?;
    let wopts = cfg.window_options();
    let similarity = |tokens: &[String]| {
        context::context_subspace_with(tokens, &res.table, cfg.rank, cfg.centered)
            .ok()
            .map(|s| s.projection_energy(&u).min(1.0).sqrt())
    };
    let own: Vec<f64> = context::extract_contexts(
        corpus,
        &target,
        &wopts,
        &res.table,
        &res.stopwords,
        cfg.max_instances(),
    )?
    .iter()
    .filter_map(|c| similarity(&c.tokens))
    .collect();

    let wanted = random_contexts.unwrap_or(own.len());
    let lines: Vec<Vec<String>> = read_lines(corpus)?
        .iter()
        .map(|l| {
            l.split_whitespace()
                .map(|t| context::normalize_token(t, cfg.lowercase))
                .collect::<Vec<_>>()
        })
        .filter(|t: &Vec<String>| !t.is_empty())
        .collect();
    let mut random = Vec::with_capacity(wanted);
    let mut rng = linalg::rng_for(&[cfg.seed, 0x7261_6e64]);
    let mut attempts = 0;
    while random.len() < wanted && !lines.is_empty() && attempts < wanted.saturating_mul(50) {
        attempts += 1;
        let line = &lines[rng.random_range(0..lines.len())];
        let pos = rng.random_range(0..line.len());
        let ctx = context::window_tokens(line, pos, &wopts, &res.table, &res.stopwords);
        if let Some(s) = similarity(&ctx) {
            random.push(s);
        }
    }
    let out = IntersectOutput { own, random };
    let mut s = String::from("set\tcontexts\tmean\tstd\n");
    for (name, xs) in [("own", &out.own), ("random", &out.random)] {
        let (m, sd) = mean_std(xs);
        writeln!(s, "{name}\t{}\t{m:.6}\t{sd:.6}", xs.len()).unwrap();
    }
    cfg.write_output("intersect_study.tsv", &s)?;
    let (ho, hr) = (histogram(&out.own, BINS), histogram(&out.random, BINS));
    let mut h = String::from("bin_lo\tbin_hi\town\trandom\n");
    for b in 0..BINS {
        writeln!(
            h,
            "{:.2}\t{:.2}\t{}\t{}",
            b as f64 / BINS as f64,
            (b + 1) as f64 / BINS as f64,
            ho[b],
            hr[b]
        )
        .unwrap();
    }
    cfg.write_output("intersect_hist.tsv", &h)?;
    cfg.write_snapshot("intersect-study")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_settings() {
        let c = RunConfig::default();
        assert_eq!(
            (c.rank, c.window, c.theta, c.beta, c.restarts),
            (3, 10, 0.6, 10.0, 10)
        );
    }

    #[test]
    fn config_text_and_snapshot_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# comment\nrank = 4\nseed=9\nseparator = #\ncorpus = c.txt\n",
            Path::new("cfg"),
        )
        .unwrap();
        assert_eq!((c.rank, c.seed, c.separator.as_str()), (4, 9, "#"));
        let mut d = RunConfig::default();
        d.apply_text(&c.snapshot(), Path::new("snap")).unwrap();
        assert_eq!(c, d);
        assert!(c.apply_text("bogus = 1", Path::new("cfg")).is_err());
        assert!(c.apply_text("rank = x", Path::new("cfg")).is_err());
        assert!(c.apply_text("rank 3", Path::new("cfg")).is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig {
            theta: 1.2,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.theta = 0.5;
        c.p = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(histogram(&[0.0, 0.5, 1.0], 2), vec![1, 2]);
    }
}
