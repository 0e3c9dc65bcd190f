use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use genlink::candidates::{candidate_stats, write_candidates, DEFAULT_CANDIDATE_CAP};
use genlink::collective::{tune_lambda, CollectiveInstance, DEFAULT_LAMBDA_GRID};
use genlink::evaluation::{
    calibration_bins, ground_truth_edges, link_accuracy, match_ground_truth, read_network, recall_curve,
    split_train_test, uniform_edges, write_ground_truth, GroundTruthLink, Split,
};
use genlink::homogamy::{
    extract_spouse_pairs, sensitivity_grid, write_series_csv, Measure, OccupationMapping, SeriesConfig, SpousePair,
};
use genlink::learner::{GbtParams, LogisticParams, ModelKind, TrainConfig};
use genlink::pipeline::{
    assignment_from_edges, binclass_posteriors, child_parents_from_edges, naive_bayes_posteriors, read_edges,
    read_ground_truth, restrict_to_children, run_method, train_link_model, write_edges_file, write_posteriors, Dataset,
    LinkModel, Method, PipelineConfig,
};
use genlink::records::{
    ingest_birth_records, ingest_death_records, occupation_coverage, write_normalized_births, BirthRecord, BirthTable,
    DeathRecord, IngestOptions, NameDictionary, OccupationDictionary, YearRange,
};
use genlink::synthgen::{generate, GeneratorConfig};

#[derive(Parser)]
#[command(
    name = "genlink",
    version,
    about = "Link historical birth records into a genealogical network"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize records, match a reference network and split it.
    Ingest(IngestArgs),
    /// Generate a synthetic population with known truth.
    Synth(SynthArgs),
    /// Fit naive Bayes and the link classifier on training links.
    Train(TrainArgs),
    /// Infer parent links with one of the link methods.
    Link(LinkArgs),
    /// Score an edge list against ground truth.
    Evaluate(EvaluateArgs),
    /// Accuracy of the collective method over a grid of pair penalties.
    TuneLambda(TuneArgs),
    /// Assortative mating series from inferred links.
    Analyze(AnalyzeArgs),
    /// Assortative mating series over a grid of thresholds and window widths.
    Sensitivity(SensitivityArgs),
}

#[derive(Args)]
struct RecordArgs {
    /// Birth records CSV.
    #[arg(long)]
    births: PathBuf,
    /// Death records CSV.
    #[arg(long)]
    deaths: Option<PathBuf>,
    /// Name dictionary CSV (raw,canonical).
    #[arg(long)]
    names: Option<PathBuf>,
    #[arg(long, default_value_t = 1600)]
    min_year: i32,
    #[arg(long, default_value_t = 1920)]
    max_year: i32,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    records: RecordArgs,
    /// Reference network CSV to match against the births.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Occupation dictionary, used only to report coverage.
    #[arg(long)]
    occupations: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_CANDIDATE_CAP)]
    cap: usize,
    /// Also write every candidate set.
    #[arg(long)]
    dump_candidates: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    /// Approximate number of birth records.
    #[arg(long, default_value_t = 20_000)]
    births: usize,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    loss: Option<f64>,
    #[arg(long)]
    remarriage: Option<f64>,
    /// Same-class preference in mate choice.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    unique_names: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    records: RecordArgs,
    /// Ground truth written by `ingest`.
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, default_value = "gbt")]
    kind: ModelKind,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    max_negatives: usize,
    /// Fit a logistic calibration map on a held-out fifth of the examples.
    #[arg(long)]
    calibrate: bool,
    #[arg(long, default_value_t = DEFAULT_CANDIDATE_CAP)]
    cap: usize,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct LinkArgs {
    #[command(flatten)]
    records: RecordArgs,
    /// Model written by `train` (not needed for randomcand).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CANDIDATE_CAP)]
    cap: usize,
    /// Also write the full posterior of every child and role.
    #[arg(long)]
    posteriors: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    records: RecordArgs,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// Which split to score: train, test or all.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    records: RecordArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// Links to tune on: train, test or all.
    #[arg(long, default_value = "train")]
    split: String,
    /// Comma-separated penalties (default: the built-in grid).
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_CANDIDATE_CAP)]
    cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HomogamyArgs {
    #[command(flatten)]
    records: RecordArgs,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    occupations: PathBuf,
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 20)]
    null_shuffles: usize,
    #[arg(long, default_value_t = 1735)]
    start: i32,
    #[arg(long, default_value_t = 1885)]
    end: i32,
    /// Measures to compute (default: all three).
    #[arg(long, value_delimiter = ',')]
    measure: Vec<Measure>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: HomogamyArgs,
    #[arg(long, default_value_t = 0.9)]
    p_th: f64,
    #[arg(long, default_value_t = 10)]
    delta_t: i32,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    common: HomogamyArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.8,0.9,0.95")]
    p_th: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15")]
    delta_t: Vec<i32>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: genlink::Error| e.to_string())
}

fn load_records(a: &RecordArgs) -> anyhow::Result<(Vec<BirthRecord>, Vec<DeathRecord>, NameDictionary)> {
    for p in std::iter::once(&a.births).chain(&a.deaths).chain(&a.names) {
        if !p.is_file() {
            return Err(genlink::Error::InvalidInput(format!("no such file: {}", p.display())).into());
        }
    }
    let names = match &a.names {
        Some(p) => NameDictionary::load(p)?,
        None => NameDictionary::empty(),
    };
    let opts = IngestOptions {
        years: YearRange {
            min: a.min_year,
            max: a.max_year,
        },
    };
    let births = ingest_birth_records(&a.births, &names, &opts)?;
    for d in &births.diagnostics {
        log::warn!("{}:{}: {}", a.births.display(), d.line, d.message);
    }
    info!(
        "births: {} of {} rows accepted",
        births.records.len(),
        births.input_rows
    );
    let deaths = match &a.deaths {
        Some(p) => {
            let d = ingest_death_records(p, &names)?;
            for diag in &d.diagnostics {
                log::warn!("{}:{}: {}", p.display(), diag.line, diag.message);
            }
            info!("deaths: {} of {} rows accepted", d.records.len(), d.input_rows);
            d.records
        }
        None => Vec::new(),
    };
    Ok((births.records, deaths, names))
}

fn load_dataset(a: &RecordArgs, cap: usize) -> anyhow::Result<Dataset> {
    let t = Instant::now();
    let (births, deaths, _) = load_records(a)?;
    let data = Dataset::new(births, deaths, cap)?;
    let st = candidate_stats(&data.candidates);
    info!(
        "candidates: {} sets, {} empty, mean size {:.2}, {} truncated ({:.1}s)",
        st.sets,
        st.empty_sets,
        st.total_candidates as f64 / st.sets.max(1) as f64,
        st.truncated_sets,
        t.elapsed().as_secs_f64()
    );
    let ds = data.death_links.stats;
    info!(
        "death links: {} of {} deaths ({} ambiguous, {} contested, {} unmatched)",
        ds.linked, ds.deaths, ds.ambiguous, ds.contested, ds.no_match
    );
    Ok(data)
}

fn select_split(links: Vec<GroundTruthLink>, split: &str) -> anyhow::Result<Vec<GroundTruthLink>> {
    let want = match split {
        "train" => Some(Split::Train),
        "test" => Some(Split::Test),
        "all" => None,
        other => bail!(genlink::Error::Config(format!(
            "split must be train, test or all, not `{other}`"
        ))),
    };
    Ok(links
        .into_iter()
        .filter(|l| want.is_none_or(|w| l.split == w))
        .collect())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| genlink::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(f))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn ingest(a: IngestArgs) -> anyhow::Result<()> {
    let (births, deaths, names) = load_records(&a.records)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_normalized_births(a.out_dir.join("births_normalized.csv"), &births)?;
    if let Some(p) = &a.occupations {
        let dict = OccupationDictionary::load(p)?;
        let cov = occupation_coverage(births.iter().map(|b| b.father_occupation_raw.as_str()), &dict);
        info!(
            "occupations: {} of {} non-empty titles resolved",
            cov.resolved, cov.non_empty
        );
    }
    let data = Dataset::new(births, deaths, a.cap)?;
    let st = candidate_stats(&data.candidates);
    info!(
        "candidates: {} sets, {} empty, {} total, {} truncated",
        st.sets, st.empty_sets, st.total_candidates, st.truncated_sets
    );
    if a.dump_candidates {
        write_candidates(a.out_dir.join("candidates.csv"), &data.births, &data.candidates)?;
    }
    if let Some(p) = &a.network {
        let persons = read_network(p)?;
        let matched = match_ground_truth(&persons, &data.births, &names);
        info!(
            "network: {} persons matched, {} ambiguous, {} unmatched",
            matched.matched(),
            matched.ambiguous,
            matched.unmatched
        );
        let edges = ground_truth_edges(&persons, &matched);
        let links = split_train_test(&edges, a.train_fraction);
        let n_train = links.iter().filter(|l| l.split == Split::Train).count();
        info!(
            "ground truth: {} links, {} train, {} test",
            links.len(),
            n_train,
            links.len() - n_train
        );
        write_ground_truth(a.out_dir.join("ground_truth.csv"), &data.births, &links)?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut cfg = GeneratorConfig::with_births(a.births, a.seed);
    if let Some(v) = a.noise {
        cfg.noise = v;
    }
    if let Some(v) = a.loss {
        cfg.record_loss = v;
    }
    if let Some(v) = a.remarriage {
        cfg.remarriage = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    cfg.unique_names = a.unique_names;
    let t = Instant::now();
    let data = generate(&cfg)?;
    data.write_to(&a.out_dir)?;
    let s = &data.stats;
    info!(
        "generated {} births ({} lost), {} deaths, {} marriages ({} remarriages) in {:.1}s",
        s.births_recorded,
        s.births_lost,
        s.deaths_recorded,
        s.marriages,
        s.remarriages,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.records, a.cap)?;
    let links = read_ground_truth(&a.ground_truth, &data.births)?;
    let config = PipelineConfig {
        max_negatives: a.max_negatives,
        seed: a.seed,
        classifier: TrainConfig {
            kind: a.kind,
            seed: a.seed,
            logistic: LogisticParams::default(),
            gbt: GbtParams::default(),
            calibrate: a.calibrate,
        },
        ..PipelineConfig::default()
    };
    let t = Instant::now();
    let (model, report) = train_link_model(&data, &links, &config)?;
    info!(
        "training set: {} positives, {} negatives, {} true parents outside the candidate sets",
        report.positives, report.negatives, report.blocking_misses
    );
    if let (Some(first), Some(last)) = (report.training_loss.first(), report.training_loss.last()) {
        info!(
            "training loss {first:.5} -> {last:.5} ({:.1}s)",
            t.elapsed().as_secs_f64()
        );
    }
    model.save(&a.model)?;
    Ok(())
}

fn link(a: LinkArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.records, a.cap)?;
    let model = match &a.model {
        Some(p) => Some(LinkModel::load(p)?),
        None if a.method == Method::RandomCand => None,
        None => bail!(genlink::Error::Config(format!(
            "--model is required for {}",
            a.method.as_str()
        ))),
    };
    let t = Instant::now();
    let nb = match &model {
        Some(m) => Some(naive_bayes_posteriors(&data, &m.naive_bayes, &m.prior)?),
        None => None,
    };
    let bc = match (&model, &nb, a.method) {
        (Some(m), Some(nb), Method::BinClass | Method::Collective) => Some(binclass_posteriors(&data, m, nb)?),
        _ => None,
    };
    let out = run_method(&data, a.method, nb.as_ref(), bc.as_ref(), a.lambda, a.seed)?;
    info!(
        "{}: {} distinct parent pairs, objective {:.3} ({:.1}s)",
        a.method.as_str(),
        out.assignment.distinct_pairs(),
        out.assignment.objective,
        t.elapsed().as_secs_f64()
    );
    write_edges_file(&a.out, &data.births, &out)?;
    if let Some(p) = &a.posteriors {
        let post = match a.method {
            Method::NaiveBayes => nb.as_ref(),
            Method::BinClass | Method::Collective => bc.as_ref(),
            Method::RandomCand => None,
        };
        match post {
            Some(post) => write_posteriors(p, &data.births, post)?,
            None => log::warn!("randomcand has no posteriors; {} not written", p.display()),
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct EvaluationReport {
    split: String,
    accuracy: genlink::evaluation::Accuracy,
    predicted_links: usize,
    distinct_pairs: usize,
    calibration: Vec<genlink::evaluation::CalibrationBin>,
    recall: Vec<genlink::evaluation::RecallPoint>,
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let (births, _, _) = load_records(&a.records)?;
    let births = BirthTable::new(births)?;
    let edges = read_edges(&a.edges, &births)?;
    let links = select_split(read_ground_truth(&a.ground_truth, &births)?, &a.split)?;
    let assignment = assignment_from_edges(&edges);
    let accuracy = link_accuracy(&assignment, &links);
    let truth: std::collections::HashMap<(genlink::RecordIx, genlink::Role), genlink::RecordIx> =
        links.iter().map(|l| ((l.child, l.role), l.parent)).collect();
    let (mut probs, mut correct) = (Vec::new(), Vec::new());
    for e in &edges {
        if let (Some(p), Some(&t)) = (e.probability, truth.get(&(e.child, e.role))) {
            probs.push(p);
            correct.push(t == e.parent);
        }
    }
    let scored: Vec<(genlink::Role, f64)> = edges.iter().filter_map(|e| Some((e.role, e.probability?))).collect();
    let thresholds: Vec<f64> = (0..=20).map(|i| f64::from(i) * 0.05).collect();
    let report = EvaluationReport {
        split: a.split.clone(),
        accuracy,
        predicted_links: edges.len(),
        distinct_pairs: assignment.distinct_pairs(),
        calibration: calibration_bins(&probs, &correct, &uniform_edges(a.bins))?,
        recall: recall_curve(&scored, &thresholds),
    };
    info!(
        "accuracy {:.4} on {} links (mother {:.4}, father {:.4})",
        accuracy.overall, accuracy.links, accuracy.mother, accuracy.father
    );
    write_json(&a.out, &report)
}

fn tune(a: TuneArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.records, a.cap)?;
    let model = LinkModel::load(&a.model)?;
    let links = select_split(read_ground_truth(&a.ground_truth, &data.births)?, &a.split)?;
    let nb = naive_bayes_posteriors(&data, &model.naive_bayes, &model.prior)?;
    let bc = binclass_posteriors(&data, &model, &nb)?;
    let instance = CollectiveInstance::from_posteriors(&restrict_to_children(&bc, &links), 0.0)?;
    let grid = if a.grid.is_empty() {
        DEFAULT_LAMBDA_GRID.to_vec()
    } else {
        a.grid.clone()
    };
    let curve = tune_lambda(&instance, &links, &grid)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["lambda", "accuracy", "distinct_pairs", "best"])?;
    for p in &curve.points {
        w.write_record([
            format!("{}", p.lambda),
            format!("{:.6}", p.accuracy),
            p.distinct_pairs.to_string(),
            u8::from(p.lambda == curve.best_lambda).to_string(),
        ])?;
    }
    w.flush()?;
    info!(
        "best lambda {} with accuracy {:.4}",
        curve.best_lambda, curve.best_accuracy
    );
    println!("{}", curve.best_lambda);
    Ok(())
}

struct HomogamyInputs {
    births: BirthTable,
    edges: Vec<genlink::homogamy::ChildParents>,
    occupations: OccupationDictionary,
    mapping: OccupationMapping,
    measures: Vec<Measure>,
    cfg: SeriesConfig,
}

impl HomogamyInputs {
    fn load(a: &HomogamyArgs) -> anyhow::Result<Self> {
        let (births, _, _) = load_records(&a.records)?;
        let births = BirthTable::new(births)?;
        let edges = child_parents_from_edges(&read_edges(&a.edges, &births)?);
        let mut cfg = SeriesConfig {
            start: a.start,
            end: a.end,
            n_bootstrap: a.bootstrap,
            seed: a.seed,
            ..SeriesConfig::default()
        };
        cfg.null.n_null = a.null_shuffles;
        Ok(HomogamyInputs {
            births,
            edges,
            occupations: OccupationDictionary::load(&a.occupations)?,
            mapping: OccupationMapping::load(&a.mapping)?,
            measures: if a.measure.is_empty() {
                vec![Measure::Occupation, Measure::Class4, Measure::Hiscam]
            } else {
                a.measure.clone()
            },
            cfg,
        })
    }

    fn pairs(&self, p_th: f64) -> Vec<SpousePair> {
        extract_spouse_pairs(&self.births, &self.edges, p_th, &self.occupations, &self.mapping)
    }
}

fn analyze(a: AnalyzeArgs) -> anyhow::Result<()> {
    check_p_th(a.p_th)?;
    let h = HomogamyInputs::load(&a.common)?;
    let cfg = SeriesConfig {
        delta_t: a.delta_t,
        ..h.cfg
    };
    let series = sensitivity_grid(&[a.p_th], &[a.delta_t], &cfg, |p| h.pairs(p));
    let series: Vec<_> = series.into_iter().filter(|s| h.measures.contains(&s.measure)).collect();
    for s in &series {
        info!(
            "{}: {} years, {} gaps",
            s.measure.as_str(),
            s.points.len(),
            s.gaps.len()
        );
    }
    write_series_csv(&a.common.out, &series)?;
    Ok(())
}

fn sensitivity(a: SensitivityArgs) -> anyhow::Result<()> {
    for &p in &a.p_th {
        check_p_th(p)?;
    }
    let h = HomogamyInputs::load(&a.common)?;
    let series = sensitivity_grid(&a.p_th, &a.delta_t, &h.cfg, |p| h.pairs(p));
    let series: Vec<_> = series.into_iter().filter(|s| h.measures.contains(&s.measure)).collect();
    write_series_csv(&a.common.out, &series)?;
    Ok(())
}

fn check_p_th(p: f64) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&p) {
        bail!(genlink::Error::Config(format!("p_th must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Link(a) => link(a),
        Command::Evaluate(a) => evaluate(a),
        Command::TuneLambda(a) => tune(a),
        Command::Analyze(a) => analyze(a),
        Command::Sensitivity(a) => sensitivity(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<genlink::Error>() {
        Some(genlink::Error::Config(_)) => 1,
        Some(e) if e.is_data_error() => 2,
        Some(_) => 3,
        None if err.downcast_ref::<csv::Error>().is_some() || err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
