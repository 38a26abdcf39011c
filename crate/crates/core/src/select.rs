//! Cross-validated auxiliary-task and rank selection.
//!
//! Task selection runs backward elimination: score the full auxiliary set,
//! score every single-task removal, keep the best removal, and repeat down to
//! the empty set. The chosen set is the visited set with the lowest average
//! held-out error. Rank selection sweeps `d` for a fixed task set and picks the
//! most stable rank among those whose average error is within `flat_tol` of
//! the best.
//!
//! Every candidate is scored on the same `R` random train/test partitions, so
//! comparisons between candidates are paired.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{csv_fmt_num, MultiTaskDataset, TaskKind};
use crate::error::{Error, Result};
use crate::glm::{fit_weighted_logistic, IrlsOptions};
use crate::ols::fit_multitask_ols;
use crate::scalar::Real;
use crate::sim::rng::{derive_seed, substream, SPLIT};
use crate::weights::feasible_weight;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluator {
    /// Held-out mean squared prediction error of the primary task.
    LinearMse,
    /// Held-out misclassification rate of the primary task, thresholding the
    /// fitted probability at 1/2.
    LogisticErr,
}

impl Evaluator {
    pub fn name(self) -> &'static str {
        match self {
            Evaluator::LinearMse => "linear_mse",
            Evaluator::LogisticErr => "logistic_err",
        }
    }

    fn task_kind(self) -> TaskKind {
        match self {
            Evaluator::LinearMse => TaskKind::Continuous,
            Evaluator::LogisticErr => TaskKind::Binary,
        }
    }
}

impl fmt::Display for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Evaluator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_mse" => Ok(Evaluator::LinearMse),
            "logistic_err" => Ok(Evaluator::LogisticErr),
            other => Err(Error::InvalidParameter(format!(
                "unknown evaluator `{other}`"
            ))),
        }
    }
}

/// How the rank is set while scoring task subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankPolicy {
    /// `d = |S| + 1`: the coefficient matrix is treated as full rank.
    FullRank,
    /// `d = min(cap, |S| + 1)`.
    Capped(usize),
}

impl RankPolicy {
    pub fn rank_for(self, n_aux: usize) -> usize {
        match self {
            RankPolicy::FullRank => n_aux + 1,
            RankPolicy::Capped(cap) => cap.clamp(1, n_aux + 1),
        }
    }
}

/// Sorted, duplicate-free subset of the auxiliary tasks `{1, …, K}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaskSet {
    indices: Vec<usize>,
}

impl TaskSet {
    pub fn new(mut indices: Vec<usize>, k_aux: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("task set has duplicates".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&k| k == 0 || k > k_aux) {
            return Err(Error::InvalidParameter(format!(
                "auxiliary task {bad} outside [1, {k_aux}]"
            )));
        }
        Ok(Self { indices })
    }

    pub fn all(k_aux: usize) -> Self {
        Self {
            indices: (1..=k_aux).collect(),
        }
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
        }
    }

    pub fn without(&self, task: usize) -> Self {
        Self {
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|&k| k != task)
                .collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, task: usize) -> bool {
        self.indices.binary_search(&task).is_ok()
    }

    /// Semicolon-joined indices; empty for the empty set.
    pub fn label(&self) -> String {
        self.indices
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionOptions {
    pub evaluator: Evaluator,
    pub r_reps: usize,
    pub train_frac: f64,
    pub seed: u64,
    pub flat_tol: f64,
    pub irls: IrlsOptions,
}

impl SelectionOptions {
    pub fn new(evaluator: Evaluator) -> Self {
        Self {
            evaluator,
            r_reps: 50,
            train_frac: 0.8,
            seed: 1,
            flat_tol: 0.05,
            irls: IrlsOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.r_reps < 2 {
            return Err(Error::InvalidParameter(
                "need at least 2 replications".into(),
            ));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction {} not in (0, 1)",
                self.train_frac
            )));
        }
        if !(self.flat_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "flat tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Seed of the `rep`-th shared partition.
    pub fn split_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, SPLIT, rep as u64)
    }
}

/// One scored candidate (task set and rank).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord<T: Real> {
    pub step: usize,
    pub tasks: TaskSet,
    pub d: usize,
    pub scores: Vec<T>,
    pub avg_err: T,
    pub std_err: T,
}

impl<T: Real> CandidateRecord<T> {
    fn new(step: usize, tasks: TaskSet, d: usize, scores: Vec<T>) -> Self {
        let r = T::from_usize_lossy(scores.len());
        let avg_err = scores.iter().fold(T::zero(), |a, &s| a + s) / r;
        let ss = scores
            .iter()
            .fold(T::zero(), |a, &s| a + (s - avg_err) * (s - avg_err));
        let std_err = (ss / (r - T::one())).sqrt();
        Self {
            step,
            tasks,
            d,
            scores,
            avg_err,
            std_err,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace<T: Real> {
    pub records: Vec<CandidateRecord<T>>,
    /// Record indices of the nested sets `S₀ ⊃ S₁ ⊃ …` (elimination) or of
    /// each grid rank (sweep).
    pub path: Vec<usize>,
    pub chosen_tasks: TaskSet,
    pub chosen_rank: Option<usize>,
    pub train_frac: f64,
    pub r_reps: usize,
}

impl<T: Real> SelectionTrace<T> {
    pub fn path_records(&self) -> impl Iterator<Item = &CandidateRecord<T>> {
        self.path.iter().map(|&i| &self.records[i])
    }
}

/// Shuffled partition of `0..n` into `round(train_frac · n)` training rows and
/// the rest.
pub fn split_indices(n: usize, train_frac: f64, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = substream(split_seed, SPLIT, 0);
    idx.shuffle(&mut rng);
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let test = idx.split_off(n_train);
    (idx, test)
}

/// Held-out primary-task error of the feasible weighted estimator fitted on
/// the training part of one partition, using the primary task plus `tasks`.
pub fn evaluate_split<T: Real>(
    data: &MultiTaskDataset<T>,
    tasks: &TaskSet,
    d: usize,
    split_seed: u64,
    evaluator: Evaluator,
    train_frac: f64,
    irls: IrlsOptions,
) -> Result<T> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_frac} not in (0, 1)"
        )));
    }
    if d == 0 || d > tasks.len() + 1 {
        return Err(Error::RankOutOfRange {
            d,
            max: tasks.len() + 1,
        });
    }
    let columns: Vec<usize> = std::iter::once(0)
        .chain(tasks.indices().iter().copied())
        .collect();
    if let Some(&bad) = columns.iter().find(|&&k| k > data.k_aux()) {
        return Err(Error::InvalidParameter(format!(
            "task {bad} not in dataset"
        )));
    }
    let want = evaluator.task_kind();
    if let Some(&k) = columns.iter().find(|&&k| data.task_kinds()[k] != want) {
        return Err(Error::InvalidParameter(format!(
            "evaluator {evaluator} cannot score task {k} of kind {:?}",
            data.task_kinds()[k]
        )));
    }
    let (train, test) = split_indices(data.n(), train_frac, split_seed);
    if train.len() <= data.p() {
        return Err(Error::TooFewSamples {
            n: train.len(),
            p: data.p(),
        });
    }
    let train_data = data.select_rows(&train).select_tasks(&columns)?;
    let beta: DVector<T> = match evaluator {
        Evaluator::LinearMse => {
            let fit = fit_multitask_ols(&train_data)?;
            let w = feasible_weight(&fit, d)?;
            fit.b_hat.entries() * w.as_vector()
        }
        Evaluator::LogisticErr => {
            fit_weighted_logistic(&train_data, d, irls)?
                .estimate
                .beta_weighted
        }
    };
    let x = data.covariates();
    let y = data.responses().column(0);
    let mut total = T::zero();
    for &i in &test {
        let pred = x.row(i).transpose().dot(&beta);
        total += match evaluator {
            Evaluator::LinearMse => (y[i] - pred) * (y[i] - pred),
            Evaluator::LogisticErr => {
                let label = if pred >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                };
                if label == y[i] {
                    T::zero()
                } else {
                    T::one()
                }
            }
        };
    }
    Ok(total / T::from_usize_lossy(test.len()))
}

fn score<T: Real>(
    data: &MultiTaskDataset<T>,
    step: usize,
    tasks: TaskSet,
    d: usize,
    opts: &SelectionOptions,
) -> Result<CandidateRecord<T>> {
    let scores = (0..opts.r_reps)
        .map(|rep| {
            evaluate_split(
                data,
                &tasks,
                d,
                opts.split_seed(rep),
                opts.evaluator,
                opts.train_frac,
                opts.irls,
            )
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(CandidateRecord::new(step, tasks, d, scores))
}

/// Index of the smallest `key` in `items`; the earliest wins ties.
fn argmin_by<I, T: Real>(items: I) -> Option<usize>
where
    I: IntoIterator<Item = T>,
{
    let mut best: Option<(usize, T)> = None;
    for (i, v) in items.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Backward elimination from the full auxiliary set down to the empty set.
/// Within a step the earliest of equally scored removals wins; along the
/// path the smallest of equally scored sets wins.
pub fn backward_task_elimination<T: Real>(
    data: &MultiTaskDataset<T>,
    policy: RankPolicy,
    opts: &SelectionOptions,
) -> Result<SelectionTrace<T>> {
    opts.validate()?;
    if data.k_aux() == 0 {
        return Err(Error::InvalidParameter("task selection needs K ≥ 1".into()));
    }
    let mut current = TaskSet::all(data.k_aux());
    let first = score(
        data,
        0,
        current.clone(),
        policy.rank_for(current.len()),
        opts,
    )?;
    let mut records = vec![first];
    let mut path = vec![0];
    let mut step = 0;
    while !current.is_empty() {
        step += 1;
        let candidates: Vec<TaskSet> = current
            .indices()
            .iter()
            .map(|&k| current.without(k))
            .collect();
        let scored = candidates
            .into_par_iter()
            .map(|set| {
                let d = policy.rank_for(set.len());
                score(data, step, set, d, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        let best = argmin_by(scored.iter().map(|r| r.avg_err)).expect("non-empty step");
        current = scored[best].tasks.clone();
        let offset = records.len();
        records.extend(scored);
        path.push(offset + best);
    }
    // Exact ties along the path come from sets whose extra tasks get zero
    // weight; the smaller set is kept.
    let opt = path.iter().enumerate().fold(0, |best, (i, &r)| {
        if records[r].avg_err <= records[path[best]].avg_err {
            i
        } else {
            best
        }
    });
    let chosen_tasks = records[path[opt]].tasks.clone();
    Ok(SelectionTrace {
        records,
        path,
        chosen_tasks,
        chosen_rank: None,
        train_frac: opts.train_frac,
        r_reps: opts.r_reps,
    })
}

/// Scores each rank in `d_grid` for the fixed task set. The chosen rank
/// minimizes the error spread among ranks with
/// `AvgErr⁽ᵈ⁾ ≤ (1 + flat_tol) · min AvgErr`.
pub fn rank_sweep<T: Real>(
    data: &MultiTaskDataset<T>,
    tasks: &TaskSet,
    d_grid: &[usize],
    opts: &SelectionOptions,
) -> Result<SelectionTrace<T>> {
    opts.validate()?;
    if d_grid.is_empty() {
        return Err(Error::InvalidParameter("rank grid is empty".into()));
    }
    if let Some(&bad) = d_grid.iter().find(|&&d| d == 0 || d > tasks.len() + 1) {
        return Err(Error::RankOutOfRange {
            d: bad,
            max: tasks.len() + 1,
        });
    }
    let records = d_grid
        .par_iter()
        .enumerate()
        .map(|(step, &d)| score(data, step, tasks.clone(), d, opts))
        .collect::<Result<Vec<_>>>()?;
    let best_avg = records
        .iter()
        .map(|r| r.avg_err)
        .fold(records[0].avg_err, |m, v| m.min(v));
    let ceiling = best_avg * (T::one() + T::lit(opts.flat_tol));
    let flat: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].avg_err <= ceiling)
        .collect();
    let pick = argmin_by(flat.iter().map(|&i| records[i].std_err)).expect("minimum is flat");
    let chosen_rank = records[flat[pick]].d;
    Ok(SelectionTrace {
        path: (0..records.len()).collect(),
        records,
        chosen_tasks: tasks.clone(),
        chosen_rank: Some(chosen_rank),
        train_frac: opts.train_frac,
        r_reps: opts.r_reps,
    })
}

/// `step,task_set,d,rep,score` rows for every split, followed by `AvgErr` and
/// `StdErr` summary rows per candidate.
pub fn write_trace_csv<T: Real>(
    path: impl AsRef<Path>,
    comment: Option<&str>,
    trace: &SelectionTrace<T>,
) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "task_set", "d", "rep", "score"])
        .map_err(csv_err)?;
    for r in &trace.records {
        let (step, set, d) = (r.step.to_string(), r.tasks.label(), r.d.to_string());
        for (rep, s) in r.scores.iter().enumerate() {
            w.write_record([
                &step,
                &set,
                &d,
                &rep.to_string(),
                &csv_fmt_num(s.to_f64_lossy()),
            ])
            .map_err(csv_err)?;
        }
    }
    for r in &trace.records {
        let (step, set, d) = (r.step.to_string(), r.tasks.label(), r.d.to_string());
        for (tag, v) in [("AvgErr", r.avg_err), ("StdErr", r.std_err)] {
            w.write_record([&step, &set, &d, tag, &csv_fmt_num(v.to_f64_lossy())])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io)
}
