mod common;

use auxlearn::data::{MultiTaskDataset, TaskKind};
use auxlearn::glm::IrlsOptions;
use auxlearn::ols::fit_multitask_ols;
use auxlearn::select::{
    backward_task_elimination, evaluate_split, rank_sweep, split_indices, Evaluator, RankPolicy,
    SelectionOptions, TaskSet,
};
use auxlearn::sim::rng::substream;
use auxlearn::sim::{draw_bernoulli, gen_planted_tasks};
use common::{linear_data, normal_matrix, random_rank_d};
use nalgebra::DMatrix;

fn opts(r: usize) -> SelectionOptions {
    let mut o = SelectionOptions::new(Evaluator::LinearMse);
    o.r_reps = r;
    o.seed = 5;
    o
}

#[test]
fn empty_task_set_scores_plain_ols() {
    let mut rng = substream(51, 0, 0);
    let b = normal_matrix(&mut rng, 4, 3);
    let data = linear_data(&mut rng, 120, &b, 1.0);
    let seed = 99;
    let score = evaluate_split(
        &data,
        &TaskSet::empty(),
        1,
        seed,
        Evaluator::LinearMse,
        0.8,
        IrlsOptions::default(),
    )
    .unwrap();

    let (train, test) = split_indices(120, 0.8, seed);
    let fit = fit_multitask_ols(&data.select_rows(&train).select_tasks(&[0]).unwrap()).unwrap();
    let beta = fit.b_hat.primary();
    let mse = test
        .iter()
        .map(|&i| {
            let r = data.responses()[(i, 0)] - data.covariates().row(i).transpose().dot(&beta);
            r * r
        })
        .sum::<f64>()
        / test.len() as f64;
    assert!((score - mse).abs() <= 1e-12 * mse.max(1.0));
}

#[test]
fn noiseless_data_scores_zero_and_scores_are_reproducible() {
    let mut rng = substream(52, 0, 0);
    let b = random_rank_d(&mut rng, 5, 4, 2);
    let data = linear_data(&mut rng, 100, b.entries(), 0.0);
    let all = TaskSet::all(3);
    let s = evaluate_split(
        &data,
        &all,
        2,
        7,
        Evaluator::LinearMse,
        0.8,
        IrlsOptions::default(),
    )
    .unwrap();
    assert!(s <= 1e-16, "{s}");
    let noisy = linear_data(&mut rng, 100, b.entries(), 1.0);
    let a = evaluate_split(
        &noisy,
        &all,
        2,
        7,
        Evaluator::LinearMse,
        0.8,
        IrlsOptions::default(),
    )
    .unwrap();
    let c = evaluate_split(
        &noisy,
        &all,
        2,
        7,
        Evaluator::LinearMse,
        0.8,
        IrlsOptions::default(),
    )
    .unwrap();
    assert_eq!(a.to_bits(), c.to_bits());
}

#[test]
fn evaluate_split_rejects_bad_inputs() {
    let mut rng = substream(53, 0, 0);
    let b = normal_matrix(&mut rng, 3, 3);
    let data = linear_data(&mut rng, 40, &b, 1.0);
    let all = TaskSet::all(2);
    let irls = IrlsOptions::default();
    assert!(evaluate_split(&data, &all, 1, 0, Evaluator::LinearMse, 1.0, irls).is_err());
    assert!(evaluate_split(&data, &all, 4, 0, Evaluator::LinearMse, 0.8, irls).is_err());
    assert!(evaluate_split(&data, &all, 1, 0, Evaluator::LogisticErr, 0.8, irls).is_err());
    let tiny = data.select_rows(&[0, 1, 2, 3]);
    assert!(evaluate_split(&tiny, &all, 1, 0, Evaluator::LinearMse, 0.8, irls).is_err());
}

#[test]
fn single_auxiliary_task_visits_two_sets() {
    let mut rng = substream(54, 0, 0);
    let b = normal_matrix(&mut rng, 3, 2);
    let data = linear_data(&mut rng, 80, &b, 1.0);
    let trace = backward_task_elimination(&data, RankPolicy::FullRank, &opts(5)).unwrap();
    let sets: Vec<String> = trace.path_records().map(|r| r.tasks.label()).collect();
    assert_eq!(sets, ["1", ""]);
    assert_eq!(trace.records.len(), 2);
    let best = trace
        .path_records()
        .map(|r| r.avg_err)
        .fold(f64::INFINITY, f64::min);
    let chosen = trace
        .path_records()
        .find(|r| r.tasks == trace.chosen_tasks)
        .unwrap();
    assert_eq!(chosen.avg_err, best);
}

#[test]
fn elimination_trace_is_nested_and_chooses_its_minimum() {
    let mut rng = substream(55, 0, 0);
    let t = gen_planted_tasks(300, 6, 3, 2, 1, 3.0, &mut rng).unwrap();
    let data =
        MultiTaskDataset::new(t.covariates, t.responses, vec![TaskKind::Continuous; 5]).unwrap();
    let o = opts(6);
    let trace = backward_task_elimination(&data, RankPolicy::Capped(2), &o).unwrap();
    let path: Vec<_> = trace.path_records().collect();
    assert_eq!(path.len(), 5);
    for w in path.windows(2) {
        assert_eq!(w[1].tasks.len() + 1, w[0].tasks.len());
        assert!(w[1].tasks.indices().iter().all(|&k| w[0].tasks.contains(k)));
    }
    let min = path.iter().map(|r| r.avg_err).fold(f64::INFINITY, f64::min);
    assert!(path
        .iter()
        .any(|r| r.tasks == trace.chosen_tasks && r.avg_err == min));
    for r in &trace.records {
        assert_eq!(r.scores.len(), 6);
        let mean = r.scores.iter().sum::<f64>() / 6.0;
        assert!((r.avg_err - mean).abs() <= 1e-15 * mean.max(1.0));
    }
    assert_eq!(
        trace,
        backward_task_elimination(&data, RankPolicy::Capped(2), &o).unwrap()
    );
}

#[test]
fn pure_noise_tasks_do_not_beat_the_empty_set() {
    let mut rng = substream(56, 0, 0);
    let x = normal_matrix(&mut rng, 200, 4);
    let beta = normal_matrix(&mut rng, 4, 1);
    let mut y = normal_matrix(&mut rng, 200, 4);
    let signal = &x * beta;
    let shifted = signal.column(0) + y.column(0);
    y.column_mut(0).copy_from(&shifted);
    let data = MultiTaskDataset::new(x, y, vec![TaskKind::Continuous; 4]).unwrap();
    let trace = backward_task_elimination(&data, RankPolicy::Capped(1), &opts(20)).unwrap();
    let empty = trace.path_records().last().unwrap();
    let best = trace
        .path_records()
        .min_by(|a, b| a.avg_err.total_cmp(&b.avg_err))
        .unwrap();
    assert!(empty.tasks.is_empty());
    assert!(empty.avg_err <= best.avg_err + empty.std_err);
}

#[test]
fn rank_sweep_singleton_and_noiseless_plateau() {
    let mut rng = substream(57, 0, 0);
    let b = random_rank_d(&mut rng, 6, 5, 2);
    let data = linear_data(&mut rng, 150, b.entries(), 1.0);
    let all = TaskSet::all(4);
    let single = rank_sweep(&data, &all, &[5], &opts(4)).unwrap();
    assert_eq!(single.chosen_rank, Some(5));

    let clean = linear_data(&mut rng, 150, b.entries(), 0.0);
    let sweep = rank_sweep(&clean, &all, &[1, 2, 3, 4, 5], &opts(4)).unwrap();
    for r in &sweep.records[1..] {
        assert!(r.avg_err <= 1e-16, "d = {}: {}", r.d, r.avg_err);
    }
    assert!(sweep.records[0].avg_err > 1e-6);
    let chosen = sweep.chosen_rank.unwrap();
    assert!(chosen >= 2);
    let min = sweep
        .records
        .iter()
        .map(|r| r.avg_err)
        .fold(f64::INFINITY, f64::min);
    let flat: Vec<_> = sweep
        .records
        .iter()
        .filter(|r| r.avg_err <= 1.05 * min)
        .collect();
    let min_sd = flat.iter().map(|r| r.std_err).fold(f64::INFINITY, f64::min);
    assert!(flat.iter().any(|r| r.d == chosen && r.std_err == min_sd));
}

#[test]
fn rank_sweep_validates_grid() {
    let mut rng = substream(58, 0, 0);
    let b = normal_matrix(&mut rng, 3, 3);
    let data = linear_data(&mut rng, 60, &b, 1.0);
    let all = TaskSet::all(2);
    assert!(rank_sweep(&data, &all, &[], &opts(3)).is_err());
    assert!(rank_sweep(&data, &all, &[0], &opts(3)).is_err());
    assert!(rank_sweep(&data, &all, &[4], &opts(3)).is_err());
    assert!(rank_sweep(&data, &all, &[1], &opts(1)).is_err());
}

#[test]
fn logistic_evaluator_scores_misclassification() {
    let mut rng = substream(59, 0, 0);
    let x = normal_matrix(&mut rng, 400, 3);
    let b = DMatrix::from_row_slice(3, 3, &[1.5, 1.4, 1.6, -1.0, -1.1, -0.9, 0.5, 0.6, 0.4]);
    let y = draw_bernoulli(
        &x,
        &auxlearn::data::CoefficientMatrix::new(b).unwrap(),
        &mut rng,
    );
    let data = MultiTaskDataset::new(x, y, vec![TaskKind::Binary; 3]).unwrap();
    let mut o = SelectionOptions::new(Evaluator::LogisticErr);
    o.r_reps = 4;
    let sweep = rank_sweep(&data, &TaskSet::all(2), &[1, 2, 3], &o).unwrap();
    for r in &sweep.records {
        assert!(r.scores.iter().all(|&s| (0.0..=0.5).contains(&s)));
        // 80 test rows: every score is a multiple of 1/80.
        assert!(r
            .scores
            .iter()
            .all(|&s| ((s * 80.0) - (s * 80.0).round()).abs() < 1e-9));
    }
}
