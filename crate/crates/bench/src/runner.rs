//! Experiment execution.
//!
//! Every trial draws its randomness from a child seed derived from the
//! master seed, a stable cell key and the trial index, so results do not
//! depend on scheduling or on which other cells exist. Recovery cells are
//! keyed by `m`; all algorithms in a cell see the same tensor, ensemble and
//! measurements. Trials run on the current rayon pool and are gathered in
//! `(cell, trial)` order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tensor_iht::lowrank::random_low_rank;
use tensor_iht::measure::{MeasurementEnsemble, MeasurementOperator, RowDistribution};
use tensor_iht::recover::{recover, RecoveryConfig, RunStatus, RunTrace};
use tensor_iht::riplab::{distortions_for_trims, quantile_sorted, rip_failure_witness_with, DistortionReport, LowRankSampler};
use tensor_iht::FitOptions;

use crate::config::{AlgoName, EnsembleKind, ExperimentKind, ExperimentSpec, Variant};
use crate::error::{BenchError, Result};
use crate::output::{
    save_convergence, save_fractions, save_results, save_survey, save_trace, save_witness, ConvergenceRow, ResultRow,
    ResultTable, SurveyRow, WitnessRecord,
};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable child seed for `(master, cell, trial)`.
pub fn derive_seed(master: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ cell) ^ trial)
}

// Stream labels inside one trial.
const STREAM_TRUTH: u64 = 0;
const STREAM_ENSEMBLE: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

fn sample_ensemble(kind: EnsembleKind, m: usize, dims: &[usize], dist: RowDistribution, seed: u64) -> Result<MeasurementEnsemble> {
    Ok(match kind {
        EnsembleKind::Dense => MeasurementEnsemble::sample_dense(m, dims, dist, seed)?,
        EnsembleKind::Facesplit => MeasurementEnsemble::sample_facesplit(m, dims, dist, seed)?,
    })
}

pub fn algo_label(a: AlgoName) -> &'static str {
    tensor_iht::recover::Algorithm::from(a).name()
}

/// One finished recovery run.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub variant: usize,
    pub m: usize,
    pub trial: usize,
    pub trace: RunTrace,
}

impl TrialRun {
    pub fn trace_file_name(&self, variants: &[Variant]) -> String {
        let v = &variants[self.variant];
        format!("{}_m{}_trim{}_trial{}.csv", algo_label(v.algo), self.m, v.m_trim, self.trial)
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    pub variants: Vec<Variant>,
    pub table: ResultTable,
    /// Empty unless the experiment is a convergence study.
    pub convergence: Vec<ConvergenceRow>,
    pub runs: Vec<TrialRun>,
}

fn recovery_config(spec: &ExperimentSpec, v: &Variant, shuffle_seed: u64) -> RecoveryConfig {
    let r = &spec.recovery;
    let mut c = RecoveryConfig::new(v.algo.into(), spec.rank_spec());
    c.max_iters = r.max_iters;
    c.success_tol = r.success_tol;
    c.step = v.step.unwrap_or(1.0);
    c.m_trim = v.m_trim;
    c.trim_convention = r.trim_convention.into();
    c.gamma = v.gamma;
    c.lambda = v.lambda.unwrap_or(1.0);
    c.shuffle_seed = shuffle_seed;
    c.diagnostics = r.diagnostics;
    c.record_time = spec.timing;
    c.fit = FitOptions::default();
    c
}

fn run_cell_trial(spec: &ExperimentSpec, variants: &[Variant], m: usize, trial: usize) -> Result<Vec<TrialRun>> {
    let seed = derive_seed(spec.seed, m as u64, trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_TRUTH, 0));
    let truth = random_low_rank(&spec.dims, &spec.rank_spec(), &mut rng)?;
    let a = sample_ensemble(
        spec.ensemble,
        m,
        &spec.dims,
        spec.distribution.into(),
        derive_seed(seed, STREAM_ENSEMBLE, 0),
    )?;
    let b = a.apply(&truth)?;
    let shuffle = derive_seed(seed, STREAM_SHUFFLE, 0);
    variants
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let r = recover(&b, &a, &recovery_config(spec, v, shuffle), Some(&truth))?;
            if r.trace.status == RunStatus::Diverged {
                log::debug!("{} m={m} trial={trial} diverged", algo_label(v.algo));
            }
            Ok(TrialRun {
                variant: i,
                m,
                trial,
                trace: r.trace,
            })
        })
        .collect()
}

fn result_row(spec: &ExperimentSpec, variants: &[Variant], run: &TrialRun) -> ResultRow {
    let v = &variants[run.variant];
    let final_rel_err = run.trace.final_rel_err().unwrap_or(f64::NAN);
    let iters = run.trace.iterations();
    ResultRow {
        algo: algo_label(v.algo).to_string(),
        m: run.m,
        m_trim: v.m_trim,
        trial: run.trial,
        recovered: final_rel_err < spec.recovery.success_tol && iters <= spec.recovery.max_iters,
        final_rel_err,
        iters,
        seconds: if spec.timing { run.trace.total_seconds() } else { 0.0 },
    }
}

/// Median and quartiles of the relative error per iteration; runs that
/// stopped early keep contributing their last error.
pub fn convergence_rows(spec: &ExperimentSpec, variants: &[Variant], runs: &[TrialRun]) -> Vec<ConvergenceRow> {
    let mut out = Vec::new();
    for (vi, v) in variants.iter().enumerate() {
        for &m in &spec.m_values {
            let traces: Vec<&RunTrace> = runs.iter().filter(|r| r.variant == vi && r.m == m).map(|r| &r.trace).collect();
            let iters = traces.iter().map(|t| t.iterations()).max().unwrap_or(0);
            for it in 1..=iters {
                let mut vals: Vec<f64> = traces
                    .iter()
                    .filter_map(|t| t.records.get(it - 1).or(t.records.last()).and_then(|r| r.rel_err))
                    .collect();
                vals.sort_by(f64::total_cmp);
                out.push(ConvergenceRow {
                    algo: algo_label(v.algo).to_string(),
                    m_trim: v.m_trim,
                    m,
                    iter: it,
                    median: quantile_sorted(&vals, 0.5),
                    q25: quantile_sorted(&vals, 0.25),
                    q75: quantile_sorted(&vals, 0.75),
                });
            }
        }
    }
    out
}

/// Runs a phase-transition or convergence experiment without touching disk.
pub fn run_recovery(spec: &ExperimentSpec) -> Result<RecoveryOutcome> {
    spec.validate()?;
    if !spec.is_recovery() {
        return Err(BenchError::Config(format!("{:?} is not a recovery experiment", spec.kind)));
    }
    let variants = spec.variants();
    let jobs: Vec<(usize, usize)> =
        spec.m_values.iter().flat_map(|&m| (0..spec.trials).map(move |t| (m, t))).collect();
    let per_job: Vec<Result<Vec<TrialRun>>> =
        jobs.par_iter().map(|&(m, t)| run_cell_trial(spec, &variants, m, t)).collect();
    let mut runs = Vec::with_capacity(jobs.len() * variants.len());
    for r in per_job {
        runs.extend(r?);
    }
    let table = ResultTable {
        rows: runs.iter().map(|r| result_row(spec, &variants, r)).collect(),
    };
    let convergence = if spec.kind == ExperimentKind::Convergence {
        convergence_rows(spec, &variants, &runs)
    } else {
        Vec::new()
    };
    Ok(RecoveryOutcome {
        variants,
        table,
        convergence,
        runs,
    })
}

/// Picks the TrimTIHT trim count from the config's sweep on `pilot_trials`
/// runs under `pilot_seed`: most recoveries, then lowest median final
/// error, then the smaller count.
pub fn select_m_trim(spec: &ExperimentSpec, pilot_trials: usize, pilot_seed: u64) -> Result<usize> {
    let mut pilot = spec.clone();
    pilot.kind = ExperimentKind::PhaseTransition;
    pilot.trials = pilot_trials;
    pilot.seed = pilot_seed;
    pilot.traces = false;
    pilot.algorithms.retain(|a| a.algo == AlgoName::TrimTiht);
    if pilot.algorithms.is_empty() {
        return Err(BenchError::Config("no trim_tiht sweep to select from".into()));
    }
    let outcome = run_recovery(&pilot)?;
    let mut best: Option<(usize, usize, f64)> = None;
    for v in &outcome.variants {
        let rows: Vec<&ResultRow> = outcome.table.rows.iter().filter(|r| r.m_trim == v.m_trim).collect();
        let wins = rows.iter().filter(|r| r.recovered).count();
        let mut errs: Vec<f64> = rows.iter().map(|r| r.final_rel_err).collect();
        errs.sort_by(f64::total_cmp);
        let med = quantile_sorted(&errs, 0.5);
        let better = match best {
            None => true,
            Some((bt, bw, be)) => wins > bw || (wins == bw && (med < be || (med == be && v.m_trim < bt))),
        };
        if better {
            best = Some((v.m_trim, wins, med));
        }
    }
    Ok(best.map(|b| b.0).unwrap())
}

/// Untrimmed/trimmed distortion statistics per `(m, m_trim, repetition)`;
/// all trim counts of a repetition share its ensemble and samples.
pub fn run_survey(spec: &ExperimentSpec) -> Result<Vec<SurveyRow>> {
    spec.validate()?;
    if spec.kind != ExperimentKind::DistortionSurvey {
        return Err(BenchError::Config(format!("{:?} is not a distortion survey", spec.kind)));
    }
    let samples = spec.samples.unwrap_or(0);
    let sampler = LowRankSampler::new(&spec.dims, spec.rank_spec())?;
    let jobs: Vec<(usize, usize)> =
        spec.m_values.iter().flat_map(|&m| (0..spec.trials).map(move |t| (m, t))).collect();
    let per_job: Vec<Result<Vec<SurveyRow>>> = jobs
        .par_iter()
        .map(|&(m, rep)| {
            let seed = derive_seed(spec.seed, m as u64, rep as u64);
            let a = sample_ensemble(
                spec.ensemble,
                m,
                &spec.dims,
                spec.distribution.into(),
                derive_seed(seed, STREAM_ENSEMBLE, 0),
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_TRUTH, 0));
            let mut per_trim = vec![Vec::with_capacity(samples); spec.survey_m_trim.len()];
            for _ in 0..samples {
                let x = sampler.sample(&mut rng)?;
                for (acc, d) in per_trim.iter_mut().zip(distortions_for_trims(&a, &x, &spec.survey_m_trim)?) {
                    acc.push(d);
                }
            }
            Ok(spec
                .survey_m_trim
                .iter()
                .zip(per_trim)
                .map(|(&t, d)| {
                    let rep_report = DistortionReport::from_distortions(String::new(), t, seed, d);
                    let q = |i: usize| rep_report.quantiles[i].1;
                    SurveyRow {
                        m,
                        m_trim: t,
                        rep,
                        samples,
                        max: rep_report.max,
                        mean: rep_report.mean,
                        quantiles: [q(0), q(1), q(2), q(3)],
                    }
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Witness ratios per `(shape, m, trial)`.
pub fn run_witness(spec: &ExperimentSpec) -> Result<Vec<WitnessRecord>> {
    spec.validate()?;
    if spec.kind != ExperimentKind::WitnessScan {
        return Err(BenchError::Config(format!("{:?} is not a witness scan", spec.kind)));
    }
    let jobs: Vec<(Vec<usize>, usize, usize)> = spec
        .witness_shapes()
        .into_iter()
        .flat_map(|dims| {
            spec.m_values
                .iter()
                .flat_map(move |&m| (0..spec.trials).map({
                    let dims = dims.clone();
                    move |t| (dims.clone(), m, t)
                }))
                .collect::<Vec<_>>()
        })
        .collect();
    jobs.par_iter()
        .map(|(dims, m, trial)| {
            let n = dims[0];
            let cell = ((n as u64) << 32) | *m as u64;
            let seed = derive_seed(spec.seed, cell, *trial as u64);
            let dist: RowDistribution = spec.distribution.into();
            let a = sample_ensemble(spec.ensemble, *m, dims, dist, derive_seed(seed, STREAM_ENSEMBLE, 0))?;
            let w = rip_failure_witness_with(&a, dist, derive_seed(seed, STREAM_TRUTH, 0), spec.witness_row.into())?;
            Ok(WitnessRecord {
                n,
                m: *m,
                trial: *trial,
                row: w.row,
                x_distortion: w.x_distortion,
                y_distortion: w.y_distortion,
                ratio: w.ratio,
            })
        })
        .collect()
}

/// Creates `dir` and checks it is writable.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(|e| BenchError::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| BenchError::io(&probe, e))
}

/// Writes `results.csv`, `fractions.csv`, `convergence.csv` (convergence
/// studies) and `traces/` (when enabled).
pub fn write_recovery_outputs(spec: &ExperimentSpec, outcome: &RecoveryOutcome, dir: &Path) -> Result<()> {
    save_results(dir.join("results.csv"), &outcome.table)?;
    save_fractions(dir.join("fractions.csv"), &outcome.table)?;
    if !outcome.convergence.is_empty() {
        save_convergence(dir.join("convergence.csv"), &outcome.convergence)?;
    }
    if spec.traces {
        for run in &outcome.runs {
            save_trace(dir.join("traces").join(run.trace_file_name(&outcome.variants)), &run.trace)?;
        }
    }
    Ok(())
}

/// Runs whatever `spec.kind` asks for and writes its CSVs into `dir`.
pub fn run_to_dir(spec: &ExperimentSpec, dir: &Path) -> Result<()> {
    spec.validate()?;
    prepare_output_dir(dir)?;
    match spec.kind {
        ExperimentKind::PhaseTransition | ExperimentKind::Convergence => {
            let outcome = run_recovery(spec)?;
            write_recovery_outputs(spec, &outcome, dir)
        }
        ExperimentKind::DistortionSurvey => save_survey(dir.join("survey.csv"), &run_survey(spec)?),
        ExperimentKind::WitnessScan => save_witness(dir.join("witness.csv"), &run_witness(spec)?),
    }
}
