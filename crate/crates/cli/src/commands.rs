use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rigidfd::calibration::{
    build_training_set, fit_gamma, predict_threshold, sample_statistics, train_predictor, MlpPredictor,
    StatisticSample, ThresholdRecord, TrainingConfig, TrainingSample,
};
use rigidfd::cliques::{participation_counts, CliqueSchedule};
use rigidfd::constellation::{propagate, ConstellationConfig, ConstellationFile};
use rigidfd::detector::{detect_faults, DetectorParams, ThresholdRule};
use rigidfd::experiment::{
    read_results_csv, run_campaign, write_results_csv, CampaignGrid, LabeledThreshold, ResultRow, TrialDraw,
};
use rigidfd::linkgraph::build_visibility_graph;
use rigidfd::ranging::{ranges_from_noise, FaultConfig};
use rigidfd::scenario::{scene_at, scenes_from};
use serde::Serialize;

use crate::config::{ExperimentConfig, ThresholdEntry};

pub type CmdResult = Result<(), Box<dyn std::error::Error>>;

pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    pub fn constellation(&self) -> rigidfd::Result<ConstellationConfig> {
        match &self.config {
            Some(p) => ConstellationConfig::load(&p.to_string_lossy()),
            None => Ok(ConstellationConfig::elfo()),
        }
    }

    fn create(&self, name: &str) -> std::io::Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }
}

/// `t` values `start, start + step, ...` not past `end`; always at least `start`.
fn time_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0) {
        return Err(format!("step must be positive, got {step}"));
    }
    if end < start {
        return Err(format!("end {end} precedes start {start}"));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|j| start + step * j as f64).collect())
}

pub fn propagate_cmd(ctx: &Context, start: f64, end: f64, step: f64) -> CmdResult {
    let cfg = ctx.constellation()?;
    let mut out = csv::Writer::from_writer(ctx.create("positions.csv")?);
    out.write_record(["t", "sat_id", "x_m", "y_m", "z_m"])?;
    for t in time_grid(start, end, step)? {
        let pos = propagate(&cfg, t)?;
        for (id, p) in pos.positions.iter().enumerate() {
            out.write_record([t.to_string(), id.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
        }
    }
    out.flush()?;
    std::fs::write(ctx.out.join("constellation.json"), ConstellationFile::from_config(&cfg).to_json()?)?;
    println!("wrote {}", ctx.out.join("positions.csv").display());
    Ok(())
}

pub fn graph_cmd(ctx: &Context, start: f64, end: f64, step: f64) -> CmdResult {
    let cfg = ctx.constellation()?;
    let mut out = ctx.create("edges.csv")?;
    let mut first = true;
    for t in time_grid(start, end, step)? {
        let g = build_visibility_graph(&propagate(&cfg, t)?, cfg.body.radius);
        g.write_edges_csv(&mut out, first)?;
        first = false;
        let degrees: Vec<String> = (0..g.n()).map(|i| g.degree(i).to_string()).collect();
        println!("t={t}: {} links, degrees [{}]", g.edge_count(), degrees.join(" "));
    }
    out.flush()?;
    Ok(())
}

pub fn cliques_cmd(ctx: &Context, start: f64, end: f64, step: f64, k: usize) -> CmdResult {
    let cfg = ctx.constellation()?;
    let times = time_grid(start, end, step)?;
    let mut schedule = CliqueSchedule::new();
    let mut counts = csv::Writer::from_writer(ctx.create("clique_counts.csv")?);
    counts.write_record(["t", "sat_id", "count"])?;
    for &t in &times {
        let scene = scene_at(&cfg, t, k)?;
        for (id, c) in participation_counts(&scene.cliques, cfg.len()).iter().enumerate() {
            counts.write_record([t.to_string(), id.to_string(), c.to_string()])?;
        }
        println!("t={t}: {} {k}-cliques", scene.cliques.len());
        schedule.push(t, scene.cliques)?;
    }
    counts.flush()?;
    let mut out = ctx.create("cliques.csv")?;
    schedule.write_csv(&mut out, k)?;
    out.flush()?;
    Ok(())
}

fn calibrated_sample(
    cfg: &ConstellationConfig,
    sigma_w: f64,
    step: f64,
    duration: Option<f64>,
    seed: u64,
) -> rigidfd::Result<StatisticSample> {
    sample_statistics(cfg, sigma_w, step, duration.unwrap_or_else(|| cfg.period()), seed)
}

pub fn calibrate_cmd(
    ctx: &Context,
    sigma_w: f64,
    percentiles: &[f64],
    step: f64,
    duration: Option<f64>,
) -> CmdResult {
    let cfg = ctx.constellation()?;
    let sample = calibrated_sample(&cfg, sigma_w, step, duration, ctx.seed)?;
    let records = percentiles
        .iter()
        .map(|&p| {
            Ok(ThresholdRecord {
                constellation: cfg.name.clone(),
                sigma_w_m: sigma_w,
                percentile: p,
                value: sample.percentile(p)?,
                n_samples: sample.len(),
            })
        })
        .collect::<rigidfd::Result<Vec<_>>>()?;
    std::fs::create_dir_all(&ctx.out)?;
    ThresholdRecord::write_all(&records, ctx.out.join("thresholds.json"))?;
    println!("{} subgraph statistics sampled", sample.len());
    for r in &records {
        println!("  {:>6}th percentile: {:.4e}", r.percentile, r.value);
    }
    match fit_gamma(&sample) {
        Ok(fit) => println!("  gamma fit: shape {:.4}, scale {:.4e}", fit.shape, fit.scale),
        Err(e) => println!("  gamma fit unavailable: {e}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainingReport {
    geometries: usize,
    noise_draws: usize,
    train_size: usize,
    test_size: usize,
    test_mse: f64,
    baseline_mse: f64,
}

fn mse(model: &MlpPredictor, set: &[TrainingSample]) -> rigidfd::Result<f64> {
    let mut total = 0.0;
    for s in set {
        total += (predict_threshold(model, &s.features)? - s.target).powi(2);
    }
    Ok(total / set.len() as f64)
}

pub struct TrainArgs {
    pub sigma_w: f64,
    pub geometries: usize,
    pub noise_draws: usize,
    pub training: TrainingConfig,
}

pub fn train_predictor_cmd(ctx: &Context, args: &TrainArgs) -> CmdResult {
    let cfg = ctx.constellation()?;
    if args.geometries < 5 {
        return Err("at least 5 geometries are needed for a train/test split".into());
    }
    let data = build_training_set(&cfg, args.sigma_w, args.geometries, args.noise_draws, ctx.seed)?;
    let split = data.len() * 4 / 5;
    let (train, test) = data.split_at(split);
    let model = train_predictor(train, &TrainingConfig { seed: ctx.seed, ..args.training })?;
    let mean = train.iter().map(|s| s.target).sum::<f64>() / train.len() as f64;
    let report = TrainingReport {
        geometries: data.len(),
        noise_draws: args.noise_draws,
        train_size: train.len(),
        test_size: test.len(),
        test_mse: mse(&model, test)?,
        baseline_mse: test.iter().map(|s| (s.target - mean).powi(2)).sum::<f64>() / test.len() as f64,
    };
    std::fs::create_dir_all(&ctx.out)?;
    model.save(ctx.out.join("model.json"))?;
    std::fs::write(ctx.out.join("training_report.json"), serde_json::to_string_pretty(&report)?)?;
    println!(
        "held-out MSE {:.4e} vs constant baseline {:.4e}",
        report.test_mse, report.baseline_mse
    );
    Ok(())
}

pub enum ThresholdChoice {
    Value(f64),
    Percentile(f64),
    Model(PathBuf),
}

pub struct DetectArgs {
    pub t0: f64,
    pub dl: usize,
    pub faults: Vec<usize>,
    pub magnitude: f64,
    pub sigma_w: f64,
    pub threshold: ThresholdChoice,
    pub step: f64,
}

#[derive(Serialize)]
struct DetectReport {
    t0: f64,
    dl: usize,
    threshold: Option<f64>,
    fault_set: Vec<usize>,
    fault_list: Vec<usize>,
    rounds: usize,
    votes: Vec<Vec<usize>>,
}

pub fn detect_cmd(ctx: &Context, args: &DetectArgs) -> CmdResult {
    let cfg = ctx.constellation()?;
    let n = cfg.len();
    let rule = match &args.threshold {
        ThresholdChoice::Value(v) => ThresholdRule::Fixed(*v),
        ThresholdChoice::Percentile(p) => {
            let sample = calibrated_sample(&cfg, args.sigma_w, args.step, None, ctx.seed)?;
            ThresholdRule::Fixed(sample.percentile(*p)?)
        }
        ThresholdChoice::Model(path) => ThresholdRule::Predicted(Arc::new(MlpPredictor::load(path)?)),
    };
    let params = DetectorParams::with_defaults(args.dl, rule.clone())?;
    let faults = FaultConfig::new(args.faults.clone(), args.magnitude)?;
    let scenes = scenes_from(&cfg, args.t0, args.step, args.dl, params.k)?;
    let draw = TrialDraw::new(ctx.seed, 0, n, cfg.period());
    let ranges = scenes
        .iter()
        .enumerate()
        .map(|(j, s)| ranges_from_noise(&s.positions, &s.graph, &faults, &draw.epoch_noise(ctx.seed, j, n, args.sigma_w)))
        .collect::<rigidfd::Result<Vec<_>>>()?;
    let cliques: Vec<_> = scenes.iter().map(|s| s.cliques.clone()).collect();
    let outcome = detect_faults(&cliques, &ranges, &params)?;
    let report = DetectReport {
        t0: args.t0,
        dl: args.dl,
        threshold: match rule {
            ThresholdRule::Fixed(v) => Some(v),
            ThresholdRule::Predicted(_) => None,
        },
        fault_set: faults.fault_set().to_vec(),
        fault_list: outcome.fault_list.clone(),
        rounds: outcome.rounds,
        votes: outcome.snapshots.iter().map(|v| v.counts().to_vec()).collect(),
    };
    std::fs::create_dir_all(&ctx.out)?;
    std::fs::write(ctx.out.join("detection.json"), serde_json::to_string_pretty(&report)?)?;
    println!("detected faults: {:?} after {} rounds", outcome.fault_list, outcome.rounds);
    Ok(())
}

fn format_percentile(p: f64) -> String {
    format!("p{p}")
}

fn campaign_thresholds(
    exp: &ExperimentConfig,
    cfg: &ConstellationConfig,
) -> Result<Vec<LabeledThreshold>, Box<dyn std::error::Error>> {
    let needs_sample = exp.thresholds.iter().any(|t| matches!(t, ThresholdEntry::Percentile { .. }));
    let sample = if needs_sample {
        Some(calibrated_sample(cfg, exp.sigma_w_m, exp.timestep_s, None, exp.seed)?)
    } else {
        None
    };
    let mut model: Option<Arc<MlpPredictor>> = None;
    let mut out = Vec::new();
    for t in &exp.thresholds {
        out.push(match t {
            ThresholdEntry::Percentile { percentile } => LabeledThreshold::fixed(
                format_percentile(*percentile),
                sample.as_ref().expect("sampled").percentile(*percentile)?,
            ),
            ThresholdEntry::Value { label, value } => LabeledThreshold::fixed(label.clone(), *value),
            ThresholdEntry::Model { label, model: path } => {
                if model.is_some() {
                    return Err("only one predictor model per campaign is supported".into());
                }
                let m = Arc::new(MlpPredictor::load(path)?);
                model = Some(m.clone());
                LabeledThreshold {
                    label: label.clone(),
                    rule: ThresholdRule::Predicted(m),
                }
            }
        });
    }
    Ok(out)
}

pub fn montecarlo_cmd(ctx: &Context, exp: &ExperimentConfig) -> CmdResult {
    let cfg = ConstellationConfig::load(&exp.constellation)?;
    let thresholds = campaign_thresholds(exp, &cfg)?;
    let mut grid = CampaignGrid::new(exp.fault_counts.clone(), exp.magnitudes_m.clone(), thresholds, exp.dl.clone());
    grid.sigma_w = exp.sigma_w_m;
    grid.k = exp.k;
    grid.delta_nf = exp.delta_nf;
    grid.delta_rf = exp.delta_rf;
    grid.step_s = exp.timestep_s;
    let rows = run_campaign(&cfg, &grid, exp.n_trials, exp.seed)?;
    write_results_csv(&rows, ctx.create("results.csv")?)?;
    println!(
        "{} cells x {} trials -> {}",
        rows.len(),
        exp.n_trials,
        ctx.out.join("results.csv").display()
    );
    Ok(())
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "   -".into()
    } else {
        format!("{v:.3}")
    }
}

/// Human-readable table of a results file.
pub fn summary(rows: &[ResultRow]) -> String {
    let mut s = String::from("faults  mag_m  threshold         dl  trials    tpr    fpr    ppv     f1     p4\n");
    for r in rows {
        s.push_str(&format!(
            "{:>6} {:>6} {:<16} {:>3} {:>7} {:>6} {:>6} {:>6} {:>6} {:>6}\n",
            r.faults,
            r.magnitude_m,
            r.threshold_label,
            r.dl,
            r.trials,
            fmt_metric(r.tpr),
            fmt_metric(r.fpr),
            fmt_metric(r.ppv),
            fmt_metric(r.f1),
            fmt_metric(r.p4)
        ));
    }
    s
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `summary.txt` and one `series_<threshold>_dl<dl>.csv` per
/// (threshold, DL) pair with metrics against fault magnitude.
pub fn report_cmd(ctx: &Context, results: &Path) -> CmdResult {
    let file = File::open(results).map_err(|e| format!("cannot open {}: {e}", results.display()))?;
    let rows = read_results_csv(file)?;
    let text = summary(&rows);
    print!("{text}");
    std::fs::create_dir_all(&ctx.out)?;
    std::fs::write(ctx.out.join("summary.txt"), &text)?;

    let mut series: BTreeMap<(String, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in &rows {
        series.entry((r.threshold_label.clone(), r.dl)).or_default().push(r);
    }
    for ((label, dl), rows) in &series {
        let name = format!("series_{}_dl{dl}.csv", sanitize(label));
        let mut w = csv::Writer::from_writer(ctx.create(&name)?);
        w.write_record(["faults", "magnitude_m", "tpr", "fpr", "ppv", "f1", "p4"])?;
        for r in rows {
            w.write_record([
                r.faults.to_string(),
                r.magnitude_m.to_string(),
                r.tpr.to_string(),
                r.fpr.to_string(),
                r.ppv.to_string(),
                r.f1.to_string(),
                r.p4.to_string(),
            ])?;
        }
        w.flush()?;
    }
    println!("{} series written to {}", series.len(), ctx.out.display());
    Ok(())
}
