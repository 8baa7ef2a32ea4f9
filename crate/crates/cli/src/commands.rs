//! The six pipeline stages. Each reads its inputs from and writes its
//! artifacts to the output directory.

use std::path::{Path, PathBuf};

use qcbm_core::landscape::{grid_losses, pairwise_barriers, plane_basis, PairPolicy, PlaneBasis};
use qcbm_core::minima::{confidence_interval, summarize, ClusterSummary, ConfidenceInterval};
use qcbm_core::neb::{
    classify_neb_outcome, neb_init, neb_run, profile_layout, NebOptions, NebOutcome,
    OutcomeThresholds,
};
use qcbm_core::objective::GhzLabel;
use qcbm_core::rng;
use qcbm_core::trainer::{run_ensemble, InitMode, TrainRun};
use qcbm_core::{CircuitSpec, KernelSpec, QcbmObjective, Shots};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{self, Csv, Provenance};

pub const RUNS_FILE: &str = "runs.jsonl";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const MINIMA_FILE: &str = "minima.json";
pub const BARRIERS_CSV: &str = "barriers.csv";
pub const BARRIERS_REPORT: &str = "barriers.json";
pub const NEB_PATH_FILE: &str = "neb_path.json";
pub const NEB_PROFILES_CSV: &str = "neb_profiles.csv";
pub const GRID_CSV: &str = "grid.csv";
pub const GRID_HEADER: &str = "grid_header.json";
pub const TRACES_CSV: &str = "traces.csv";
pub const TRACES_SUMMARY: &str = "traces_summary.json";

/// Stream ids for the stages that draw shots after training.
const CLUSTER_STREAM: u64 = 1;
const BARRIERS_STREAM: u64 = 2;
const NEB_STREAM: u64 = 3;
const GRID_STREAM: u64 = 4;

/// Effective configuration of one invocation.
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Context {
    fn provenance(&self) -> Provenance {
        Provenance::new(self.config.hash(), self.config.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stage_rng(&self, stream: u64) -> rng::SimRng {
        rng::child(self.config.seed, stream)
    }
}

fn shots_label(shots: Shots) -> String {
    match shots {
        Shots::Exact => "exact".into(),
        Shots::Finite(n) => n.to_string(),
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub provenance: Provenance,
    #[serde(flatten)]
    pub run: TrainRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitStats {
    pub init_mode: InitMode,
    pub runs: usize,
    pub mean_initial_loss: f64,
    pub mean_final_loss: f64,
    pub median_final_loss: f64,
    pub mean_final_exact_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub circuit: CircuitSpec,
    pub param_count: usize,
    pub steps: usize,
    pub shots: Shots,
    pub runs: usize,
    pub mean_initial_loss: f64,
    pub mean_final_loss: f64,
    pub median_final_loss: f64,
    pub final_loss_ci: Option<ConfidenceInterval>,
    pub by_init: Vec<InitStats>,
}

fn init_stats(runs: &[&TrainRun], mode: InitMode) -> Option<InitStats> {
    if runs.is_empty() {
        return None;
    }
    let initial: Vec<f64> = runs.iter().map(|r| r.loss_trace[0]).collect();
    let fin: Vec<f64> = runs.iter().map(|r| r.final_loss).collect();
    let exact: Vec<f64> = runs.iter().map(|r| r.final_exact_loss).collect();
    Some(InitStats {
        init_mode: mode,
        runs: runs.len(),
        mean_initial_loss: mean(&initial),
        mean_final_loss: mean(&fin),
        median_final_loss: median(&fin),
        mean_final_exact_loss: mean(&exact),
    })
}

pub fn train(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let base = ctx.config.train_config();
    let runs = run_ensemble(&base, ctx.config.split())?;
    let provenance = ctx.provenance();
    let records: Vec<RunRecord> = runs
        .iter()
        .map(|run| RunRecord {
            provenance: provenance.clone(),
            run: run.clone(),
        })
        .collect();

    let initial: Vec<f64> = runs.iter().map(|r| r.loss_trace[0]).collect();
    let finals: Vec<f64> = runs.iter().map(|r| r.final_loss).collect();
    let by_init = [InitMode::Zero, InitMode::Uniform]
        .into_iter()
        .filter_map(|mode| {
            let subset: Vec<&TrainRun> = runs.iter().filter(|r| r.config.init_mode == mode).collect();
            init_stats(&subset, mode)
        })
        .collect();
    let summary = TrainSummary {
        provenance,
        circuit: base.circuit,
        param_count: base.circuit.param_count(),
        steps: base.steps,
        shots: base.shots,
        runs: runs.len(),
        mean_initial_loss: mean(&initial),
        mean_final_loss: mean(&finals),
        median_final_loss: median(&finals),
        final_loss_ci: confidence_interval(&finals, ctx.config.minima.confidence).ok(),
        by_init,
    };
    output::say(format!(
        "trained {} runs: mean initial loss {:.6}, mean final loss {:.6}, median final loss {:.6}",
        summary.runs, summary.mean_initial_loss, summary.mean_final_loss, summary.median_final_loss
    ));
    Ok(vec![
        output::write_json_lines(&ctx.path(RUNS_FILE), &records)?,
        output::write_json(&ctx.path(TRAIN_SUMMARY_FILE), &summary)?,
    ])
}

fn load_runs(dir: &Path) -> Result<Vec<RunRecord>, CliError> {
    output::read_json_lines(&dir.join(RUNS_FILE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub input_config_hash: String,
    pub circuit: CircuitSpec,
    pub kernel: KernelSpec,
    pub runs: usize,
    pub report: String,
    pub summary: ClusterSummary,
}

impl MinimaFile {
    /// The down-selected minima with their re-evaluated losses.
    fn minima(&self) -> Vec<(Vec<f64>, f64)> {
        self.summary
            .downselected
            .iter()
            .map(|&i| {
                let c = &self.summary.centers[i];
                (c.params.clone(), c.loss)
            })
            .collect()
    }
}

pub fn cluster(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let records = load_runs(&ctx.out)?;
    let first = records
        .first()
        .ok_or_else(|| CliError::Degenerate("runs file is empty".into()))?;
    let circuit = first.run.config.circuit;
    let kernel = first.run.config.kernel.clone();
    let params: Vec<Vec<f64>> = records.iter().map(|r| r.run.final_params.clone()).collect();
    let losses: Vec<f64> = records.iter().map(|r| r.run.final_loss).collect();
    let objective = QcbmObjective::new(circuit, &kernel, Shots::Exact)?;
    let options = ctx.config.cluster_options();
    let summary = summarize(
        &params,
        &losses,
        &objective,
        &options,
        &mut ctx.stage_rng(CLUSTER_STREAM),
    )?;
    let report = format!(
        "m={}, m'={}, bandwidth={:.6}, ci=[{:.6}, {:.6}]{}",
        summary.m(),
        summary.m_prime(),
        summary.bandwidth,
        summary.ci.lower,
        summary.ci.upper,
        if summary.degenerate { " (degenerate)" } else { "" }
    );
    output::say(&report);
    let file = MinimaFile {
        provenance: ctx.provenance(),
        input_config_hash: first.provenance.config_hash.clone(),
        circuit,
        kernel,
        runs: records.len(),
        report,
        summary,
    };
    Ok(vec![output::write_json(&ctx.path(MINIMA_FILE), &file)?])
}

fn load_minima(dir: &Path) -> Result<MinimaFile, CliError> {
    output::read_json(&dir.join(MINIMA_FILE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub i: usize,
    pub j: usize,
    pub loss_i: f64,
    pub loss_j: f64,
    pub max_loss: f64,
    pub raw_barrier: f64,
    pub alpha_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub input_config_hash: String,
    pub policy: PairPolicy,
    pub resolution: usize,
    pub shots: Shots,
    pub minima: usize,
    pub pairs: Vec<PairSummary>,
    pub lowest_pair: (usize, usize),
    pub min_alpha_metric: f64,
    pub min_raw_barrier: f64,
}

pub fn barriers(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let file = load_minima(&ctx.out)?;
    let minima: Vec<Vec<f64>> = file.minima().into_iter().map(|(p, _)| p).collect();
    let shots = ctx.config.landscape_shots();
    let objective = QcbmObjective::new(file.circuit, &file.kernel, shots)?;
    let policy = ctx.config.pair_policy()?;
    let resolution = ctx.config.landscape.resolution;
    let result = pairwise_barriers(
        &objective,
        &minima,
        policy,
        resolution,
        &mut ctx.stage_rng(BARRIERS_STREAM),
    )?;
    let provenance = ctx.provenance();
    let mut csv = Csv::new(&provenance, &["i", "j", "alpha", "loss", "n_s", "seed"]);
    for pair in &result.pairs {
        for (alpha, loss) in pair.profile.alphas.iter().zip(&pair.profile.losses) {
            csv.row(&[
                pair.i.to_string(),
                pair.j.to_string(),
                alpha.to_string(),
                loss.to_string(),
                shots_label(shots),
                ctx.config.seed.to_string(),
            ]);
        }
    }
    let pairs: Vec<PairSummary> = result
        .pairs
        .iter()
        .map(|p| {
            let l = &p.profile.losses;
            PairSummary {
                i: p.i,
                j: p.j,
                // alpha = 1 is the first minimum of the pair.
                loss_i: l[l.len() - 1],
                loss_j: l[0],
                max_loss: l.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                raw_barrier: p.profile.raw_barrier,
                alpha_metric: p.profile.alpha_metric,
            }
        })
        .collect();
    let lowest = &result.pairs[result.lowest];
    let report = BarrierReport {
        provenance,
        input_config_hash: file.provenance.config_hash.clone(),
        policy,
        resolution,
        shots,
        minima: minima.len(),
        pairs,
        lowest_pair: (lowest.i, lowest.j),
        min_alpha_metric: result.min_alpha_metric,
        min_raw_barrier: result.min_raw_barrier,
    };
    output::say(format!(
        "{} pairs; lowest barrier alpha={:.4} (raw {:.6}) between minima {} and {}",
        report.pairs.len(),
        report.min_alpha_metric,
        report.min_raw_barrier,
        lowest.i,
        lowest.j
    ));
    Ok(vec![
        csv.save(&ctx.path(BARRIERS_CSV))?,
        output::write_json(&ctx.path(BARRIERS_REPORT), &report)?,
    ])
}

fn parse_indices(text: &str, count: usize, flag: &str) -> Result<Vec<usize>, CliError> {
    let values: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("--{flag} expects {count} comma-separated indices")))?;
    if values.len() != count {
        return Err(CliError::Config(format!(
            "--{flag} expects {count} comma-separated indices, got `{text}`"
        )));
    }
    Ok(values)
}

fn check_indices(indices: &[usize], available: usize) -> Result<(), CliError> {
    if available < indices.len().min(2) {
        return Err(CliError::Degenerate(format!(
            "only {available} down-selected minima available"
        )));
    }
    if let Some(bad) = indices.iter().find(|&&i| i >= available) {
        return Err(CliError::Config(format!(
            "minimum index {bad} out of range ({available} available)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NebReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub input_config_hash: String,
    pub pair: (usize, usize),
    pub options: NebOptions,
    pub thresholds: OutcomeThresholds,
    pub shots: Shots,
    pub profile_resolution: usize,
    pub outcome: NebOutcome,
    pub initial_barrier: f64,
    pub final_barrier: f64,
    pub barrier_trace: Vec<f64>,
    pub initial_nodes: Vec<Vec<f64>>,
    pub final_nodes: Vec<Vec<f64>>,
    /// Pivot losses at the start of every step.
    pub pivot_loss_history: Vec<Vec<f64>>,
}

pub fn neb(ctx: &Context, pair: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    let file = load_minima(&ctx.out)?;
    let minima = file.minima();
    let (i, j) = match pair {
        Some(text) => {
            let v = parse_indices(text, 2, "pair")?;
            (v[0], v[1])
        }
        None => (0, 1),
    };
    check_indices(&[i, j], minima.len())?;
    let shots = ctx.config.neb_shots();
    let objective = QcbmObjective::new(file.circuit, &file.kernel, shots)?;
    let options = ctx.config.neb_options();
    let thresholds = ctx.config.thresholds();
    let resolution = ctx.config.neb.profile_resolution;
    let path = neb_init(&minima[i].0, &minima[j].0, &options)?;
    let run = neb_run(
        &path,
        &objective,
        options.steps,
        resolution,
        &mut ctx.stage_rng(NEB_STREAM),
    )?;
    let outcome = classify_neb_outcome(&run.initial_profile, &run.final_profile, &thresholds)?;
    let provenance = ctx.provenance();
    let mut csv = Csv::new(&provenance, &["series", "segment", "local_alpha", "loss"]);
    let layout = profile_layout(options.segments, resolution);
    for (series, profile) in [("initial", &run.initial_profile), ("final", &run.final_profile)] {
        for ((segment, local), loss) in layout.iter().zip(profile.iter()) {
            csv.row(&[
                series.to_string(),
                segment.to_string(),
                local.to_string(),
                loss.to_string(),
            ]);
        }
    }
    let owned = |p: &qcbm_core::neb::NebPath| -> Vec<Vec<f64>> {
        p.nodes().into_iter().map(<[f64]>::to_vec).collect()
    };
    let report = NebReport {
        provenance,
        input_config_hash: file.provenance.config_hash.clone(),
        pair: (i, j),
        options,
        thresholds,
        shots,
        profile_resolution: resolution,
        outcome,
        initial_barrier: run.initial_barrier,
        final_barrier: run.final_barrier,
        barrier_trace: run.barrier_trace.clone(),
        initial_nodes: owned(&run.initial),
        final_nodes: owned(&run.path),
        pivot_loss_history: run.path.loss_history.clone(),
    };
    output::say(format!(
        "NEB {i}-{j}: {outcome} (barrier {:.6} -> {:.6})",
        run.initial_barrier, run.final_barrier
    ));
    Ok(vec![
        output::write_json(&ctx.path(NEB_PATH_FILE), &report)?,
        csv.save(&ctx.path(NEB_PROFILES_CSV))?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub name: String,
    /// Index into the down-selected minima.
    pub minimum: usize,
    pub coords: (f64, f64),
    pub grid_loss: f64,
    pub minima_file_loss: f64,
    pub ghz: GhzLabel,
    pub fidelity_plus: f64,
    pub fidelity_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub input_config_hash: String,
    pub triple: (usize, usize, usize),
    pub basis: PlaneBasis,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    pub resolution: usize,
    pub shots: Shots,
    pub anchors: Vec<AnchorRecord>,
}

pub fn grid(ctx: &Context, triple: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    let file = load_minima(&ctx.out)?;
    let minima = file.minima();
    let idx = match triple {
        Some(text) => parse_indices(text, 3, "triple")?,
        None => vec![0, 1, 2],
    };
    if minima.len() < 3 {
        return Err(CliError::Degenerate(format!(
            "a plane needs 3 minima, {} available",
            minima.len()
        )));
    }
    check_indices(&idx, minima.len())?;
    if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
        return Err(CliError::Config("--triple needs three distinct indices".into()));
    }
    let basis = plane_basis(&minima[idx[0]].0, &minima[idx[1]].0, &minima[idx[2]].0)?;
    let (u_range, v_range) = basis.window(ctx.config.landscape.window_lo, ctx.config.landscape.window_hi);
    let shots = ctx.config.landscape_shots();
    let objective = QcbmObjective::new(file.circuit, &file.kernel, shots)?;
    let resolution = ctx.config.landscape.grid_resolution;
    let grid = grid_losses(
        &objective,
        &basis,
        u_range,
        v_range,
        resolution,
        &mut ctx.stage_rng(GRID_STREAM),
    )?;
    let provenance = ctx.provenance();
    let mut csv = Csv::new(&provenance, &["u", "v", "loss"]);
    for (iv, v) in grid.v_values.iter().enumerate() {
        for (iu, u) in grid.u_values.iter().enumerate() {
            csv.row(&[u.to_string(), v.to_string(), grid.loss(iu, iv).to_string()]);
        }
    }
    let anchors = grid
        .anchors
        .iter()
        .zip(&idx)
        .map(|(a, &k)| AnchorRecord {
            name: a.name.clone(),
            minimum: k,
            coords: a.coords,
            grid_loss: a.loss,
            minima_file_loss: minima[k].1,
            ghz: a.ghz.label,
            fidelity_plus: a.ghz.fidelity_plus,
            fidelity_minus: a.ghz.fidelity_minus,
        })
        .collect();
    let header = GridHeader {
        provenance,
        input_config_hash: file.provenance.config_hash.clone(),
        triple: (idx[0], idx[1], idx[2]),
        basis,
        u_range,
        v_range,
        resolution,
        shots,
        anchors,
    };
    output::say(format!(
        "grid {}x{} over u in [{:.4}, {:.4}], v in [{:.4}, {:.4}]",
        resolution, resolution, u_range.0, u_range.1, v_range.0, v_range.1
    ));
    Ok(vec![
        csv.save(&ctx.path(GRID_CSV))?,
        output::write_json(&ctx.path(GRID_HEADER), &header)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run_id: usize,
    pub init_mode: InitMode,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss range over the first `plateau_steps` steps stayed below `plateau_delta`.
    pub plateau: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub input_config_hash: String,
    pub plateau_steps: usize,
    pub plateau_delta: f64,
    pub plateau_runs: usize,
    pub runs: Vec<TraceRecord>,
}

fn init_label(mode: InitMode) -> &'static str {
    match mode {
        InitMode::Zero => "zero",
        InitMode::Uniform => "uniform",
    }
}

pub fn traces(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let records = load_runs(&ctx.out)?;
    let provenance = ctx.provenance();
    let steps = ctx.config.traces.plateau_steps;
    let delta = ctx.config.traces.plateau_delta;
    let mut csv = Csv::new(&provenance, &["run_id", "step", "loss", "init_mode"]);
    let mut runs = Vec::with_capacity(records.len());
    for r in &records {
        let run = &r.run;
        for (step, loss) in run.loss_trace.iter().enumerate() {
            csv.row(&[
                run.run_id.to_string(),
                step.to_string(),
                loss.to_string(),
                init_label(run.config.init_mode).to_string(),
            ]);
        }
        let window = &run.loss_trace[..=steps.min(run.loss_trace.len() - 1)];
        let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
        runs.push(TraceRecord {
            run_id: run.run_id,
            init_mode: run.config.init_mode,
            initial_loss: run.loss_trace[0],
            final_loss: run.final_loss,
            plateau: hi - lo < delta,
        });
    }
    let summary = TraceSummary {
        provenance,
        input_config_hash: records
            .first()
            .map(|r| r.provenance.config_hash.clone())
            .unwrap_or_default(),
        plateau_steps: steps,
        plateau_delta: delta,
        plateau_runs: runs.iter().filter(|r| r.plateau).count(),
        runs,
    };
    output::say(format!(
        "{} runs; {} on an initial plateau (range < {} over {} steps)",
        summary.runs.len(),
        summary.plateau_runs,
        delta,
        steps
    ));
    Ok(vec![
        csv.save(&ctx.path(TRACES_CSV))?,
        output::write_json(&ctx.path(TRACES_SUMMARY), &summary)?,
    ])
}
