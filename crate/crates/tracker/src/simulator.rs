//! Synthetic students with hidden success rates, replayed through the
//! engine to measure calibration.
//!
//! True rates follow a Gaussian random walk on the logit scale (clamped to
//! `±LOGIT_BOUND`); `sigma = 0` keeps them static and exact. Each trial picks an
//! exercise uniformly, samples its outcome from the rates, and happens one
//! `step_secs` after the previous one.

use std::collections::BTreeMap;
use std::fmt;

use pdt_core::SkillId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::engine::{apply_observation, own_state, predict, INTERVAL_MASS};
use crate::error::Result;
use crate::graph::SkillGraph;
use crate::model::{ExerciseId, Observation, StudentId, StudentRecord, Timestamp};

pub const LOGIT_BOUND: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub students: usize,
    pub trials: usize,
    pub seed: u64,
    /// Starting rate of every skill; uniform on `[0.2, 0.8]` when absent.
    pub initial_rate: Option<f64>,
    /// Per-step standard deviation of the logit walk.
    pub sigma: f64,
    pub step_secs: i64,
    pub start: Timestamp,
    pub bins: usize,
    /// Bins with fewer predictions are reported but not judged.
    pub min_bin_count: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            students: 20,
            trials: 200,
            seed: 7,
            initial_rate: None,
            sigma: 0.05,
            step_secs: 86_400,
            start: 0,
            bins: 10,
            min_bin_count: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub exercise: ExerciseId,
    pub at: Timestamp,
    /// True success probability of the exercise at this trial.
    pub p: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub student: StudentId,
    pub trials: Vec<Trial>,
    /// True skill rates after the last trial.
    pub final_rates: BTreeMap<SkillId, f64>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One scripted student per index; student `i` draws from stream `i` of
/// the seeded generator, so scripts do not depend on the cohort size.
pub fn gen_cohort(graph: &SkillGraph, cfg: &SimConfig) -> Vec<Script> {
    let exercises: Vec<_> = graph.exercises().collect();
    let skills: Vec<SkillId> = graph.skills().map(|s| s.id.clone()).collect();
    let start_dist = Uniform::new(0.2, 0.8).expect("valid range");
    let step = Normal::new(0.0, cfg.sigma.max(0.0)).expect("finite sigma");
    (0..cfg.students)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let mut rates: BTreeMap<SkillId, f64> = skills
                .iter()
                .map(|s| (s.clone(), cfg.initial_rate.unwrap_or_else(|| start_dist.sample(&mut rng)).clamp(0.0, 1.0)))
                .collect();
            let mut trials = Vec::with_capacity(cfg.trials);
            if !exercises.is_empty() {
                for t in 0..cfg.trials {
                    let ex = exercises[rng.random_range(0..exercises.len())];
                    let p = ex.poly.evaluate(&rates).expect("every skill has a rate").clamp(0.0, 1.0);
                    let success = rng.random::<f64>() < p;
                    trials.push(Trial { exercise: ex.id.clone(), at: cfg.start + t as i64 * cfg.step_secs, p, success });
                    if cfg.sigma > 0.0 {
                        for r in rates.values_mut() {
                            let l = logit(*r).clamp(-LOGIT_BOUND, LOGIT_BOUND) + step.sample(&mut rng);
                            *r = logistic(l.clamp(-LOGIT_BOUND, LOGIT_BOUND));
                        }
                    }
                }
            }
            Script { student: StudentId::new(format!("sim-{i:04}")), trials, final_rates: rates }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub student: StudentId,
    pub step: usize,
    pub exercise: ExerciseId,
    pub predicted: f64,
    pub p: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSkill {
    pub student: StudentId,
    pub skill: SkillId,
    pub truth: f64,
    pub mean: f64,
    pub interval: [f64; 2],
    pub practice_count: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimRun {
    pub steps: Vec<StepResult>,
    /// Own-data state of every practiced skill after the last trial.
    pub finals: Vec<FinalSkill>,
}

impl SimRun {
    pub fn extend(&mut self, other: SimRun) {
        self.steps.extend(other.steps);
        self.finals.extend(other.finals);
    }
}

/// Replays scripts through the engine, forecasting each outcome first.
pub fn run(graph: &SkillGraph, scripts: &[Script]) -> Result<SimRun> {
    let mut out = SimRun::default();
    for script in scripts {
        let mut record = StudentRecord::default();
        for (step, trial) in script.trials.iter().enumerate() {
            let predicted = predict(graph, &record, &trial.exercise, trial.at)?;
            out.steps.push(StepResult {
                student: script.student.clone(),
                step,
                exercise: trial.exercise.clone(),
                predicted,
                p: trial.p,
                success: trial.success,
            });
            let obs = Observation {
                student: script.student.clone(),
                exercise: trial.exercise.clone(),
                outcome: pdt_core::Outcome::from_bool(trial.success),
                at: trial.at,
            };
            for s in apply_observation(graph, &record, &obs)? {
                record.states.insert(s.skill.clone(), s);
            }
            record.last_seq = step as u64 + 1;
            record.last_at = Some(trial.at);
        }
        let end = record.last_at.unwrap_or(0);
        for (skill, state) in &record.states {
            let dist = own_state(graph, &record, skill, end)?;
            let (lo, hi) = dist.credible_interval(INTERVAL_MASS);
            out.finals.push(FinalSkill {
                student: script.student.clone(),
                skill: skill.clone(),
                truth: script.final_rates[skill],
                mean: dist.mean(),
                interval: [lo, hi],
                practice_count: state.practice_count,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_predicted: f64,
    pub observed_rate: f64,
    /// `|mean_predicted - observed_rate|`.
    pub gap: f64,
    pub judged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub predictions: usize,
    pub brier: f64,
    pub log_loss: f64,
    pub bins: Vec<Bin>,
    /// Largest gap over judged bins.
    pub max_gap: f64,
    /// Share of final skills whose credible interval holds the true rate.
    pub coverage: Option<f64>,
    /// Largest `|final mean - truth|` over final skills.
    pub max_final_error: Option<f64>,
}

pub fn calibration_report(run: &SimRun, bins: usize, min_bin_count: usize) -> CalibrationReport {
    let bins = bins.max(1);
    let n = run.steps.len();
    let mut brier = 0.0;
    let mut log_loss = 0.0;
    let mut acc = vec![(0usize, 0.0f64, 0usize); bins];
    for s in &run.steps {
        let y = if s.success { 1.0 } else { 0.0 };
        brier += (s.predicted - y).powi(2);
        let p = s.predicted.clamp(1e-12, 1.0 - 1e-12);
        log_loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        let b = ((s.predicted * bins as f64) as usize).min(bins - 1);
        acc[b].0 += 1;
        acc[b].1 += s.predicted;
        acc[b].2 += s.success as usize;
    }
    let bins: Vec<Bin> = acc
        .iter()
        .enumerate()
        .map(|(i, &(count, sum, hits))| {
            let (mean_predicted, observed_rate) =
                if count == 0 { (f64::NAN, f64::NAN) } else { (sum / count as f64, hits as f64 / count as f64) };
            Bin {
                lo: i as f64 / bins as f64,
                hi: (i + 1) as f64 / bins as f64,
                count,
                mean_predicted,
                observed_rate,
                gap: (mean_predicted - observed_rate).abs(),
                judged: count > 0 && count >= min_bin_count,
            }
        })
        .collect();
    let max_gap = bins.iter().filter(|b| b.judged).map(|b| b.gap).fold(0.0, f64::max);
    let finals = &run.finals;
    let coverage = (!finals.is_empty()).then(|| {
        finals.iter().filter(|f| f.interval[0] <= f.truth && f.truth <= f.interval[1]).count() as f64
            / finals.len() as f64
    });
    let max_final_error = finals.iter().map(|f| (f.mean - f.truth).abs()).reduce(f64::max);
    let denom = n.max(1) as f64;
    CalibrationReport {
        predictions: n,
        brier: brier / denom,
        log_loss: log_loss / denom,
        bins,
        max_gap,
        coverage,
        max_final_error,
    }
}

/// Generates, runs and scores a cohort.
pub fn simulate(graph: &SkillGraph, cfg: &SimConfig) -> Result<(SimRun, CalibrationReport)> {
    let scripts = gen_cohort(graph, cfg);
    let run = run(graph, &scripts)?;
    let report = calibration_report(&run, cfg.bins, cfg.min_bin_count);
    Ok((run, report))
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "predictions  {}", self.predictions)?;
        writeln!(f, "brier        {:.6}", self.brier)?;
        writeln!(f, "log-loss     {:.6}", self.log_loss)?;
        if let Some(c) = self.coverage {
            writeln!(f, "coverage     {:.4} ({:.0}% intervals)", c, INTERVAL_MASS * 100.0)?;
        }
        if let Some(e) = self.max_final_error {
            writeln!(f, "final error  {e:.4}")?;
        }
        writeln!(f, "max gap      {:.4}", self.max_gap)?;
        writeln!(f, "bin          count   predicted  observed  gap")?;
        for b in &self.bins {
            if b.count == 0 {
                continue;
            }
            writeln!(
                f,
                "[{:.2}, {:.2})  {:>6}  {:.4}     {:.4}    {:.4}{}",
                b.lo,
                b.hi,
                b.count,
                b.mean_predicted,
                b.observed_rate,
                b.gap,
                if b.judged { "" } else { "  (too few)" }
            )?;
        }
        Ok(())
    }
}
