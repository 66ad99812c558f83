//! Command-line surface: argument parsing and the subcommand drivers.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bins::{
    expected_decode, greedy_decode, quantize_scalar, BinDistribution, BinSchema, QuantizeParams,
};
use crate::config::{RunConfig, SEED_ENV};
use crate::error::{Error, Result};
use crate::fusion::{
    confidence_weights, discrepancy, fuse_confidence_weighted, SyntheticAnnotationSet,
};
use crate::gradcheck::{default_suite, SuiteConfig};
use crate::head::{forward, FeatureVector, Featurizer};
use crate::io::{
    self, FeaturizerSpec, FusedRecord, Header, Instance, LogRecord, ModelFile, PredictionRecord,
    RatingRecord, Source, Target, TraceAnswerRecord,
};
use crate::loss::OrderSign;
use crate::metrics::{
    brier, ece, jsd, mean_absolute_error, pairwise_direction_accuracy, ranking_risk, spearman,
    MetricsReport,
};
use crate::rank::{run_tournament, ComparisonRecord, TournamentItem};
use crate::registry::{self, ComparatorArgs, FeaturizerArgs, ScorerArgs};
use crate::structural::{answer_trace, ScoreRecord, Scorer, TraceAccuracy};
use crate::train::{train, DirectExample, PairExample, TrainingSet};

/// Relative error above which `gradcheck` reports a numeric failure.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "odds",
    version,
    about = "Fine-grained conditional probability estimation"
)]
struct Cli {
    /// TOML run configuration; omitted sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the Gaussian-quantized target for a scalar label.
    Quantize {
        #[arg(long)]
        y: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        bins: usize,
    },
    /// Fuse recorded multi-model rollouts into training targets.
    Fuse {
        #[arg(long)]
        rollouts: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Rate items with a pairwise tournament.
    Rank {
        #[arg(long)]
        items: PathBuf,
        /// Recorded judgements, required by the `table` comparator.
        #[arg(long)]
        comparisons: Option<PathBuf>,
        /// Items file whose scores drive the `hidden-score` comparator.
        #[arg(long)]
        hidden: Option<PathBuf>,
        #[arg(long, default_value = "table")]
        comparator: String,
        /// Destination of the match log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train a probability head.
    Train {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Fused targets that replace the targets of matching instances.
        #[arg(long)]
        fused: Option<PathBuf>,
        #[command(flatten)]
        features: FeaturesArg,
        /// Destination of the model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Predict coarse and fine probabilities with a trained head.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        #[command(flatten)]
        features: FeaturesArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Score predictions against gold targets.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Answer Maieutic and BIRD traces.
    TraceScore {
        #[arg(long)]
        traces: PathBuf,
        /// Overrides the configured scorer.
        #[arg(long)]
        scorer: Option<String>,
        /// Score table for the `table` scorer.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Trained model for the `head` scorer.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        features: FeaturesArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeaturesArg {
    /// Precomputed feature vectors keyed by instance id.
    #[arg(long)]
    features: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV).ok();
    run_with_env(argv, env_seed.as_deref(), out, err)
}

/// Like [`run`] but with the seed override passed explicitly.
pub fn run_with_env<I, S>(
    argv: I,
    env_seed: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli, env_seed, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, env_seed: Option<&str>, out: &mut dyn Write) -> Result<i32> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .resolve(env_seed)?;
    match cli.command {
        Command::Quantize { y, sigma, bins } => quantize(y, sigma, bins, out),
        Command::Fuse { rollouts, out: o } => fuse(&config, &rollouts, o.out.as_deref(), out),
        Command::Rank {
            items,
            comparisons,
            hidden,
            comparator,
            log,
            out: o,
        } => rank(
            &config,
            RankPaths {
                items: &items,
                comparisons: comparisons.as_deref(),
                hidden: hidden.as_deref(),
                log: log.as_deref(),
                out: o.out.as_deref(),
            },
            &comparator,
            out,
        ),
        Command::Train {
            instances,
            pairs,
            fused,
            features,
            model,
        } => train_cmd(
            &config,
            &instances,
            pairs.as_deref(),
            fused.as_deref(),
            features.features.as_deref(),
            &model,
            out,
        ),
        Command::Predict {
            model,
            instances,
            features,
            out: o,
        } => predict(
            &config,
            &model,
            &instances,
            features.features.as_deref(),
            o.out.as_deref(),
            out,
        ),
        Command::Eval {
            predictions,
            gold,
            pairs,
            out: o,
        } => eval(
            &config,
            &predictions,
            &gold,
            pairs.as_deref(),
            o.out.as_deref(),
            out,
        ),
        Command::TraceScore {
            traces,
            scorer,
            scores,
            model,
            features,
            out: o,
        } => trace_score(
            &config,
            &traces,
            scorer.as_deref(),
            scores.as_deref(),
            model.as_deref(),
            features.features.as_deref(),
            o.out.as_deref(),
            out,
        ),
        Command::Gradcheck {
            points,
            epsilon,
            bins,
        } => gradcheck(points, epsilon, bins, config.seed, out),
    }
}

fn header(command: &str, config: &RunConfig) -> Header {
    Header {
        command: command.into(),
        config: config.to_json(),
    }
}

fn emit<T: Serialize>(
    path: Option<&Path>,
    header: &Header,
    records: &[T],
    stdout: &mut dyn Write,
) -> Result<()> {
    let text = io::to_jsonl(Some(header), records)?;
    match path {
        Some(p) => io::write_text(p, &text),
        None => write_stdout(stdout, &text),
    }
}

fn write_stdout(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn quantize(y: f64, sigma: f64, bins: usize, out: &mut dyn Write) -> Result<i32> {
    #[derive(Serialize)]
    struct Quantized<'a> {
        y: f64,
        sigma: f64,
        n_bins: usize,
        probs: &'a [f64],
    }
    let schema = BinSchema::new(bins)?;
    let dist = quantize_scalar(y, QuantizeParams::new(sigma)?, &schema)?;
    let line = io::to_json_line(&Quantized {
        y,
        sigma,
        n_bins: bins,
        probs: dist.probs(),
    })?;
    write_stdout(out, &format!("{line}\n"))?;
    Ok(0)
}

fn fuse(
    config: &RunConfig,
    rollouts: &Path,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let records = io::load_rollouts(rollouts)?;
    let schema = config.schema()?;
    let fusion = &config.fusion;
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&io::RolloutRecord>> = HashMap::new();
    for r in &records {
        groups
            .entry(&r.instance_id)
            .or_insert_with(|| {
                order.push(&r.instance_id);
                Vec::new()
            })
            .push(r);
    }
    let mut fused = Vec::with_capacity(order.len());
    for id in order {
        let group = &groups[id];
        let estimates: Vec<f64> = group.iter().map(|r| r.estimate).collect();
        let spread = discrepancy(&estimates)?;
        let flagged = spread > fusion.discrepancy_threshold;
        let confidences = if flagged {
            group
                .iter()
                .map(|r| {
                    r.confidence.ok_or_else(|| {
                        Error::Domain(format!(
                            "instance `{id}` exceeds the agreement threshold but `{}` has no confidence",
                            r.model_name
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?
        } else {
            vec![1.0; group.len()]
        };
        let mut set = SyntheticAnnotationSet::new(id, estimates, confidences)?;
        set.rationales = group.iter().map(|r| r.rationale.clone()).collect();
        fused.push(FusedRecord {
            instance_id: id.to_string(),
            discrepancy: spread,
            flagged,
            weights: confidence_weights(&set.confidences, fusion.alpha)?,
            target: fuse_confidence_weighted(&set, fusion, &schema)?,
        });
    }
    emit(dest, &header("fuse", config), &fused, out)?;
    Ok(0)
}

struct RankPaths<'a> {
    items: &'a Path,
    comparisons: Option<&'a Path>,
    hidden: Option<&'a Path>,
    log: Option<&'a Path>,
    out: Option<&'a Path>,
}

fn rank(
    config: &RunConfig,
    paths: RankPaths<'_>,
    comparator: &str,
    out: &mut dyn Write,
) -> Result<i32> {
    let items: Vec<TournamentItem> = io::load(paths.items)?;
    let mut args = ComparatorArgs::default();
    if let Some(p) = paths.comparisons {
        args.records = io::load::<ComparisonRecord>(p)?;
    }
    if let Some(p) = paths.hidden {
        args.hidden_scores = io::load::<TournamentItem>(p)?
            .into_iter()
            .map(|i| (i.id, i.direct_score))
            .collect();
    }
    let comparator = registry::comparators().create(comparator, args)?;
    let mut scheduler = registry::schedulers().create(&config.tournament.scheduler, ())?;
    let result = run_tournament(
        &items,
        comparator.as_ref(),
        scheduler.as_mut(),
        &config.tournament,
    )?;
    let mapped = result.mapped_scores(config.tournament.temperature)?;
    let ratings: Vec<RatingRecord> = result
        .items
        .iter()
        .zip(mapped)
        .map(|(item, mapped_score)| RatingRecord {
            id: item.id.clone(),
            coarse_bin: item.bin,
            mu: item.rating.mu,
            sigma: item.rating.sigma,
            mapped_score,
        })
        .collect();
    let h = header("rank", config);
    if let Some(log_path) = paths.log {
        let log: Vec<LogRecord> = result
            .log
            .iter()
            .map(|e| LogRecord {
                step: e.step,
                a_id: items[e.a].id.clone(),
                b_id: items[e.b].id.clone(),
                outcome: e.outcome,
            })
            .collect();
        io::save(log_path, Some(&h), &log)?;
    }
    emit(paths.out, &h, &ratings, out)?;
    Ok(0)
}

fn build_featurizer(spec: &FeaturizerSpec, features: Option<&Path>) -> Result<Box<dyn Featurizer>> {
    let mut args = FeaturizerArgs {
        dim: spec.dim,
        seed: spec.seed,
        ..Default::default()
    };
    if let Some(p) = features {
        for r in io::load_features(p)? {
            let v = r.to_vector()?;
            args.table.insert(r.id, v);
        }
    } else if spec.name == "precomputed" {
        return Err(Error::Config(
            "the precomputed featurizer needs --features".into(),
        ));
    }
    registry::featurizers().create(&spec.name, args)
}

fn featurize_all(
    featurizer: &dyn Featurizer,
    instances: &[Instance],
) -> Result<HashMap<String, FeatureVector>> {
    instances
        .iter()
        .map(|i| {
            Ok((
                i.id.clone(),
                featurizer.featurize(&i.id, &i.context, &i.proposition)?,
            ))
        })
        .collect()
}

fn target_distribution(target: &Target, sigma: f64, schema: &BinSchema) -> Result<BinDistribution> {
    match target {
        Target::Scalar(y) => quantize_scalar(*y, QuantizeParams::new(sigma)?, schema),
        Target::Distribution(d) if d.len() == schema.n_bins() => Ok(d.clone()),
        Target::Distribution(d) => Err(Error::SchemaMismatch {
            expected: schema.n_bins(),
            got: d.len(),
        }),
    }
}

fn train_cmd(
    config: &RunConfig,
    instances_path: &Path,
    pairs: Option<&Path>,
    fused: Option<&Path>,
    features: Option<&Path>,
    model_path: &Path,
    out: &mut dyn Write,
) -> Result<i32> {
    let schema = config.schema()?;
    let instances = io::load_instances(instances_path)?;
    let spec = FeaturizerSpec {
        name: config.features.featurizer.clone(),
        dim: config.features.dim,
        seed: config.features.seed,
    };
    let featurizer = build_featurizer(&spec, features)?;
    let spec = FeaturizerSpec {
        dim: featurizer.dim(),
        ..spec
    };
    let vectors = featurize_all(featurizer.as_ref(), &instances)?;
    let mut fused_targets: HashMap<String, BinDistribution> = HashMap::new();
    if let Some(p) = fused {
        for r in io::load::<FusedRecord>(p)? {
            fused_targets.insert(r.instance_id, r.target);
        }
    }
    let mut data = TrainingSet::default();
    for inst in &instances {
        let features = vectors[&inst.id].clone();
        if let Some(target) = fused_targets.get(&inst.id) {
            let target = target_distribution(
                &Target::Distribution(target.clone()),
                config.training.sigma,
                &schema,
            )?;
            data.synthetic.push(DirectExample { features, target });
            continue;
        }
        let Some(target) = &inst.target else { continue };
        let example = DirectExample {
            features,
            target: target_distribution(target, config.training.sigma, &schema)?,
        };
        match inst.source {
            Source::Human => data.human.push(example),
            Source::Synthetic => data.synthetic.push(example),
            Source::Unlabeled => {}
        }
    }
    if let Some(p) = pairs {
        for (line, pair) in io::load_pairs(p)?.into_iter().enumerate() {
            let lookup = |id: &str| {
                vectors.get(id).cloned().ok_or_else(|| Error::Range {
                    path: p.to_path_buf(),
                    line: line + 1,
                    message: format!("pair references unknown instance `{id}`"),
                })
            };
            data.pairwise.push(PairExample {
                a: lookup(&pair.a)?,
                b: lookup(&pair.b)?,
                sign: pair.label,
            });
        }
    }
    let outcome = train(&data, &config.training, &schema)?;
    let h = header("train", config);
    io::save_model(
        model_path,
        &ModelFile {
            header: h.clone(),
            featurizer: spec,
            head: outcome.head,
        },
    )?;
    let last = outcome.history.last().copied();
    emit(None, &h, &last.into_iter().collect::<Vec<_>>(), out)?;
    Ok(0)
}

fn predict(
    config: &RunConfig,
    model_path: &Path,
    instances_path: &Path,
    features: Option<&Path>,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let model = io::load_model(model_path)?;
    let schema = BinSchema::new(model.head.n_bins)?;
    let featurizer = build_featurizer(&model.featurizer, features)?;
    let instances = io::load_instances(instances_path)?;
    let mut preds = Vec::with_capacity(instances.len());
    for inst in &instances {
        let x = featurizer.featurize(&inst.id, &inst.context, &inst.proposition)?;
        let probs = forward(&model.head, &x)?;
        let (coarse_bin, coarse_value) = greedy_decode(&probs, &schema)?;
        preds.push(PredictionRecord {
            id: inst.id.clone(),
            coarse_bin,
            coarse_value,
            fine: expected_decode(&probs, &schema)?,
            probs,
        });
    }
    emit(dest, &header("predict", config), &preds, out)?;
    Ok(0)
}

fn eval(
    config: &RunConfig,
    predictions: &Path,
    gold_path: &Path,
    pairs: Option<&Path>,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let preds = io::load::<PredictionRecord>(predictions)?;
    let by_id: HashMap<&str, &PredictionRecord> =
        preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let gold = io::load_instances(gold_path)?;
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::Config(format!("no prediction for instance `{id}`")))
    };

    let mut fine = Vec::new();
    let mut golds = Vec::new();
    let mut divergences = Vec::new();
    for inst in &gold {
        let Some(target) = &inst.target else { continue };
        let p = lookup(&inst.id)?;
        let schema = BinSchema::new(p.probs.len())?;
        let g = match target {
            Target::Scalar(y) => *y,
            Target::Distribution(d) => {
                divergences.push(jsd(p.probs.probs(), d.probs())?);
                expected_decode(d, &schema)?
            }
        };
        fine.push(p.fine);
        golds.push(g);
    }
    if fine.is_empty() {
        return Err(Error::EmptyInput("no gold targets to evaluate".into()));
    }

    let mut report = MetricsReport::default();
    let n = fine.len();
    report.insert("mae", mean_absolute_error(&fine, &golds)?, n);
    // Constant sequences or all-tied golds leave these undefined; they are omitted.
    if let Ok(rho) = spearman(&fine, &golds) {
        report.insert("spearman", rho, n);
    }
    if let Ok(risk) = ranking_risk(&fine, &golds) {
        report.insert("ranking_risk", risk, n);
    }
    if golds.iter().all(|g| *g == 0.0 || *g == 1.0) {
        let labels: Vec<bool> = golds.iter().map(|g| *g == 1.0).collect();
        report.insert("ece", ece(&fine, &labels, config.metrics.ece_bins)?, n);
        report.insert("brier", brier(&fine, &labels)?, n);
    }
    if !divergences.is_empty() {
        let mean = divergences.iter().sum::<f64>() / divergences.len() as f64;
        report.insert("jsd", mean, divergences.len());
    }
    if let Some(p) = pairs {
        let ordered: Vec<(f64, f64)> = io::load_pairs(p)?
            .iter()
            .map(|pair| {
                let (a, b) = (lookup(&pair.a)?.fine, lookup(&pair.b)?.fine);
                Ok(match pair.label {
                    OrderSign::FirstHigher => (a, b),
                    OrderSign::SecondHigher => (b, a),
                })
            })
            .collect::<Result<_>>()?;
        report.insert(
            "direction_accuracy",
            pairwise_direction_accuracy(&ordered)?,
            ordered.len(),
        );
    }
    emit(dest, &header("eval", config), &[report], out)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn trace_score(
    config: &RunConfig,
    traces_path: &Path,
    scorer_name: Option<&str>,
    scores: Option<&Path>,
    model: Option<&Path>,
    features: Option<&Path>,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let traces = io::load_traces(traces_path)?;
    let mut args = ScorerArgs {
        constant: Some(config.structural.constant),
        ..Default::default()
    };
    if let Some(p) = scores {
        args.table = io::load::<ScoreRecord>(p)?;
    }
    if let Some(p) = model {
        let m = io::load_model(p)?;
        let featurizer = build_featurizer(&m.featurizer, features)?;
        args.head = Some((m.head, featurizer));
    }
    let name = scorer_name.unwrap_or(&config.structural.scorer);
    let scorer: Box<dyn Scorer> = registry::scorers().create(name, args)?;

    let mut answers = Vec::with_capacity(traces.len());
    let (mut evaluated, mut correct) = (0usize, 0usize);
    for trace in &traces {
        let answer = answer_trace(trace, scorer.as_ref())?;
        let ok = answer.matches(trace);
        if let Some(ok) = ok {
            evaluated += 1;
            correct += usize::from(ok);
        }
        answers.push(TraceAnswerRecord {
            id: trace.id().to_string(),
            correct: ok,
            answer,
        });
    }
    let h = header("trace-score", config);
    emit(dest, &h, &answers, out)?;
    if dest.is_some() && evaluated > 0 {
        let summary = TraceAccuracy {
            accuracy: correct as f64 / evaluated as f64,
            evaluated,
            correct,
        };
        write_stdout(out, &format!("{}\n", io::to_json_line(&summary)?))?;
    }
    Ok(0)
}

fn gradcheck(
    points: usize,
    epsilon: f64,
    bins: usize,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<i32> {
    let suite = SuiteConfig {
        points,
        epsilon,
        n_bins: bins,
        seed: seed.unwrap_or(SuiteConfig::default().seed),
    };
    let reports = default_suite(suite)?;
    let text = io::to_jsonl(None, &reports)?;
    write_stdout(out, &text)?;
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(if worst < GRADCHECK_TOLERANCE { 0 } else { 2 })
}
