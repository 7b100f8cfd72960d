use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polysemy::cli::{self, Resources, RunConfig};
use polysemy::embeddings::cosine;
use polysemy::grassmeans::SenseModel;
use polysemy::lexeme::{self, LineupMode, SimMode};
use polysemy::metrics::{self, build_contingency, paired_f_score, v_measure};
use polysemy::synth::{Fixture, FIXTURE_SEED};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn config(out: &Path) -> RunConfig {
    let f = fixtures();
    RunConfig {
        embeddings: Some(f.join("embeddings.txt")),
        frequencies: Some(f.join("frequencies.txt")),
        stopwords: Some(f.join("stopwords.txt")),
        corpus: Some(f.join("corpus.txt")),
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

fn bin(args: &[&str]) -> Output {
    let f = fixtures();
    Command::new(env!("CARGO_BIN_EXE_polysemy"))
        .args(args)
        .arg("--embeddings")
        .arg(f.join("embeddings.txt"))
        .arg("--stopwords")
        .arg(f.join("stopwords.txt"))
        .arg("--corpus")
        .arg(f.join("corpus.txt"))
        .output()
        .unwrap()
}

#[test]
fn shipped_fixtures_match_generator() {
    let dir = tempfile::tempdir().unwrap();
    Fixture::new(FIXTURE_SEED).write_all(dir.path()).unwrap();
    for e in std::fs::read_dir(dir.path()).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap();
        let shipped = std::fs::read(fixtures().join(name)).unwrap();
        assert!(
            std::fs::read(&p).unwrap() == shipped,
            "{name:?} differs; rerun the gen_fixtures example"
        );
    }
}

#[test]
fn induce_recovers_planted_senses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let res = Resources::load(&cfg).unwrap();
    let out = cli::cmd_induce(&cfg, &res, "crane").unwrap();
    assert_eq!(out.contexts, 120);
    assert!(out.report_path.exists());
    assert!(dir.path().join("induce.resolved.conf").exists());

    // sense of each occurrence is visible from its topic words
    let corpus = std::fs::read_to_string(cfg.corpus.as_ref().unwrap()).unwrap();
    let lines: Vec<&str> = corpus.lines().collect();
    let (mut gold, mut pred) = (Vec::new(), Vec::new());
    for a in out.model.assignments.as_ref().unwrap() {
        let line: usize = a.instance_id.split(':').next().unwrap().parse().unwrap();
        gold.push(lines[line - 1].contains("bird_"));
        pred.push(a.cluster);
    }
    let acc =
        metrics::best_permutation_accuracy(&build_contingency(&gold, &pred).unwrap()).unwrap();
    assert_eq!(acc, 1.0);

    let again = cli::cmd_induce(&cfg, &res, "crane").unwrap();
    assert_eq!(again.model, out.model);

    let too_many = RunConfig {
        k: 200,
        ..cfg.clone()
    };
    assert!(cli::cmd_induce(&too_many, &res, "crane").is_err());
    assert!(cli::cmd_induce(&cfg, &res, "zebra").is_err());
}

#[test]
fn eval_wsi_matches_direct_metric_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let res = Resources::load(&cfg).unwrap();
    for w in ["crane", "bank"] {
        cli::cmd_induce(&cfg, &res, w).unwrap();
    }
    let out = cli::cmd_eval_wsi(&cfg, &res, dir.path(), &fixtures().join("wsi_gold.tsv")).unwrap();
    assert_eq!(out.per_target.len(), 2);
    for t in &out.per_target {
        assert_eq!((t.v.v, t.f.f), (1.0, 1.0), "{}", t.target);
    }
    let table = std::fs::read_to_string(dir.path().join("wsi_scores.tsv")).unwrap();
    assert!(table
        .lines()
        .last()
        .unwrap()
        .starts_with("MACRO\t80\t2.00\t100.00"));

    // one cluster for everything, two balanced classes per word: V = 0
    let gold = ["a", "a", "b", "b"];
    let t = build_contingency(&gold, &[1, 1, 1, 1]).unwrap();
    assert_eq!(v_measure(&t).v, 0.0);
    assert!((paired_f_score(&t).f - 0.5).abs() < 1e-12);

    // targets without a model are reported and excluded
    let only_crane = tempfile::tempdir().unwrap();
    std::fs::copy(
        dir.path().join("crane.model.json"),
        only_crane.path().join("crane.model.json"),
    )
    .unwrap();
    let out = cli::cmd_eval_wsi(
        &cfg,
        &res,
        only_crane.path(),
        &fixtures().join("wsi_gold.tsv"),
    )
    .unwrap();
    assert_eq!(out.excluded.get("bank"), Some(&40));
}

#[test]
fn scws_modes_and_lineup_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let res = Resources::load(&cfg).unwrap();
    for w in ["crane", "bank", "typhoon"] {
        let c = RunConfig {
            k: if w == "typhoon" { 1 } else { 2 },
            ..cfg.clone()
        };
        cli::cmd_induce(&c, &res, w).unwrap();
    }
    let f = fixtures();
    let lex = f.join("lexemes.txt");
    let data = f.join("scws.tsv");
    let global = cli::cmd_eval_scws(&cfg, &res, None, None, &data, SimMode::Global, false).unwrap();
    assert_eq!(global.skipped_unmarked, 1);
    // global mode is the plain cosine of the two word vectors
    let file = std::fs::File::open(&data).unwrap();
    let rows = lexeme::read_scws(std::io::BufReader::new(file), &data).unwrap();
    for (id, score) in &global.scores {
        let row = rows.iter().find(|r| &r.id == id).unwrap();
        let (a, b) = (
            res.table.vector(&row.word1).unwrap(),
            res.table.vector(&row.word2).unwrap(),
        );
        assert!((score - cosine(a, b).unwrap()).abs() < 1e-12);
    }
    let hard = cli::cmd_eval_scws(
        &cfg,
        &res,
        Some(&lex),
        Some(dir.path()),
        &data,
        SimMode::Hard,
        false,
    )
    .unwrap();
    assert!(
        hard.spearman > global.spearman,
        "{} vs {}",
        hard.spearman,
        global.spearman
    );
    assert!(cli::cmd_eval_scws(&cfg, &res, None, None, &data, SimMode::Hard, false).is_err());

    let curve = cli::cmd_lineup(
        &cfg,
        &res,
        Some(&lex),
        &f.join("lineup.tsv"),
        LineupMode::Lexeme,
        6,
    )
    .unwrap();
    assert_eq!(curve.len(), 6);
    assert_eq!(curve[1].recall, 1.0);
    let lines = std::fs::read_to_string(dir.path().join("lineup_curve.tsv")).unwrap();
    assert_eq!(lines.lines().count(), 7);
}

#[test]
fn studies_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        restarts: 3,
        ..config(dir.path())
    };
    let res = Resources::load(&cfg).unwrap();
    let rows =
        cli::cmd_synth_merge(&cfg, &res, &fixtures().join("monosemous.txt"), &[1, 3], 2).unwrap();
    assert_eq!(rows[0].mean_accuracy, 1.0);
    assert_eq!(rows[1].mean_accuracy, 1.0);
    let table = std::fs::read_to_string(dir.path().join("synth_merge.tsv")).unwrap();
    assert_eq!(
        table
            .lines()
            .nth(2)
            .unwrap()
            .split('\t')
            .take(2)
            .collect::<Vec<_>>(),
        ["3", "2"]
    );

    let a = cli::cmd_lowrank_study(&cfg, &res, 4).unwrap();
    let b = cli::cmd_lowrank_study(&cfg, &res, 4).unwrap();
    assert_eq!(a, b);
    for r in &a.ratios {
        assert!(r.iter().all(|x| (0.0..=1.0).contains(x)));
    }
    assert_eq!(
        std::fs::read_to_string(dir.path().join("lowrank_hist.tsv"))
            .unwrap()
            .lines()
            .count(),
        21
    );

    let mut no_freq = cfg.clone();
    no_freq.frequencies = None;
    let bare = Resources::load(&no_freq).unwrap();
    assert!(cli::cmd_lowrank_study(&no_freq, &bare, 4).is_err());
    assert!(
        cli::cmd_synth_merge(&no_freq, &bare, &fixtures().join("monosemous.txt"), &[2], 1).is_err()
    );
}

#[test]
fn disambiguate_prints_a_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let res = Resources::load(&cfg).unwrap();
    let model = cli::cmd_induce(&cfg, &res, "crane").unwrap().model;
    let out = cli::cmd_disambiguate(&cfg, &res, &model, "bird_1 bird_2 crane bird_3", 2).unwrap();
    let rows: Vec<Vec<&str>> = out.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].len(), rows[1].len());
    let p: Vec<f64> = rows[1][5..].iter().map(|x| x.parse().unwrap()).collect();
    let k: usize = rows[1][2].parse().unwrap();
    assert!(p
        .iter()
        .enumerate()
        .all(|(i, x)| i + 1 == k || *x < p[k - 1]));

    let empty = cli::cmd_disambiguate(&cfg, &res, &model, "the crane was", 1).unwrap();
    let row: Vec<&str> = empty.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(&row[2..], ["IDK", "NA", "IDK", "0.500000", "0.500000"]);
    assert!(cli::cmd_disambiguate(&cfg, &res, &model, "crane", 3).is_err());
}

#[test]
fn binary_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin(&["induce", "crane", "--out", out, "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = SenseModel::load(dir.path().join("crane.model.json")).unwrap();
    assert_eq!(model.seed, 3);

    // rerunning from the snapshot reproduces the model
    let again = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_polysemy"))
        .args(["induce", "crane", "--config"])
        .arg(dir.path().join("induce.resolved.conf"))
        .arg("--out")
        .arg(again.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(dir.path().join("crane.model.json")).unwrap(),
        std::fs::read(again.path().join("crane.model.json")).unwrap()
    );

    let o = bin(&[
        "disambiguate",
        "--model",
        &format!("{out}/crane.model.json"),
        "--sentence",
        "crane bird_1",
        "--position",
        "0",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .starts_with("target\tposition\tk_star"));

    let o = bin(&["induce", "zebra", "--out", out]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("zebra"));
    let o = bin(&["induce", "crane", "--out", out, "--theta", "2"]);
    assert!(!o.status.success());
}
