//! Checks against independent references: central finite differences and a
//! dense eigendecomposition pseudo-inverse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rosa_core::engine::{run_session, InteractionSession, Method, SessionConfig, UpdateMechanism};
use rosa_core::oracle::{RuleOracle, TaskInstance};
use rosa_core::policy::{ParameterVector, PolicyModel};
use rosa_core::solver::{rank_one_solution, solve_normal_equations, RowOperator, SolverConfig};
use rosa_core::target::RewardSignal;

fn model_for(family: usize, rng: &mut ChaCha8Rng) -> PolicyModel {
    let responses = rng.random_range(2..=8);
    let fdim = rng.random_range(1..=4);
    let features: Vec<f64> = (0..2 * fdim).map(|_| rng.random_range(-1.5..1.5)).collect();
    match family {
        0 => PolicyModel::tabular(2, responses).unwrap(),
        1 => PolicyModel::linear(features, fdim, responses).unwrap(),
        _ => PolicyModel::mlp(features, fdim, rng.random_range(2..=5), responses).unwrap(),
    }
}

fn central_difference(model: &PolicyModel, theta: &[f64], x: usize, y: usize, h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[i] += h;
            down[i] -= h;
            (model.prob(&up, x, y).unwrap() - model.prob(&down, x, y).unwrap()) / (2.0 * h)
        })
        .collect()
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for family in 0..3 {
        for _ in 0..100 {
            let model = model_for(family, &mut rng);
            let theta: Vec<f64> = (0..model.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x = rng.random_range(0..model.context_count());
            let y = rng.random_range(0..model.response_count());
            let g = model.grad_prob(&theta, x, y).unwrap();
            let fd = central_difference(&model, &theta, x, y, 1e-6);
            for (a, b) in g.as_slice().iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5, "{:?}: {a} vs {b}", model.family());
            }
        }
    }
}

fn dense_min_norm(rows: &[Vec<f64>], d: &[f64]) -> Vec<f64> {
    let m = rows.len();
    let n = rows[0].len();
    let j = DMatrix::from_fn(m, n, |i, k| rows[i][k]);
    // J⁺ = Jᵀ·(JJᵀ)⁺ with the symmetric eigendecomposition of JJᵀ
    let eig = SymmetricEigen::new(&j * j.transpose());
    let cutoff = 1e-10 * eig.eigenvalues.amax();
    let rhs = DVector::from_column_slice(d);
    let mut w = DVector::zeros(m);
    for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let q = eig.eigenvectors.column(c);
            w += q * (q.dot(&rhs) / lambda);
        }
    }
    (j.transpose() * w).iter().copied().collect()
}

#[test]
fn cg_matches_dense_pseudo_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..60 {
        let m = rng.random_range(1..=50);
        let n = rng.random_range(1..=200);
        let rank = rng.random_range(1..=m.min(n));
        // J = U·V with inner dimension `rank` so some systems are rank deficient
        let u: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let v: Vec<Vec<f64>> = (0..rank)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let rows: Vec<Vec<f64>> = u
            .iter()
            .map(|ui| {
                (0..n)
                    .map(|k| ui.iter().zip(&v).map(|(a, vr)| a * vr[k]).sum())
                    .collect()
            })
            .collect();
        let d: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = RowOperator::new(n, rows.clone()).unwrap();
        let cfg = SolverConfig {
            rel_tolerance: 1e-10,
            max_iterations: Some(4 * n.max(m)),
            damping: 0.0,
        };
        let s = solve_normal_equations(&op, &d, &cfg).unwrap();
        let want = dense_min_norm(&rows, &d);
        let scale = want.iter().map(|w| w * w).sum::<f64>().sqrt().max(1.0);
        let err = s
            .delta
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err / scale <= 1e-6, "case {case} ({m}x{n}, rank {rank}): error {err}");
    }
}

#[test]
fn cg_matches_rank_one_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..500 {
        let p = if case % 50 == 0 {
            10_000
        } else {
            rng.random_range(1..=2_000)
        };
        let g: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = rng.random_range(-1.0..1.0);
        let op = RowOperator::new(p, vec![g.clone()]).unwrap();
        let s = solve_normal_equations(&op, &[d], &SolverConfig::default()).unwrap();
        let want = rank_one_solution(&g, d, 0.0).unwrap();
        assert!(s.iterations <= 2, "case {case}: {} iterations", s.iterations);
        let gap = s
            .delta
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = want.iter().map(|w| w.abs()).fold(1.0, f64::max);
        assert!(gap <= 1e-10 * scale, "case {case}: gap {gap}");
    }
}

#[test]
fn updated_probability_lands_near_target_on_mlp() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = PolicyModel::mlp(vec![0.4, -0.7, 1.0], 3, 8, 5).unwrap();
    let mut close = 0;
    for _ in 0..200 {
        let base = model.init_params(&mut rng);
        let task = TaskInstance::new(0, 0, 5, 4).unwrap();
        let mut s = InteractionSession::new(task, &model, base, SessionConfig::default()).unwrap();
        let y = rng.random_range(0..4);
        let out = s.adapt_step(y, RewardSignal::FAILURE).unwrap().record;
        let target = out.target_prob.unwrap();
        if (out.prob_after - target).abs() <= 0.05 {
            close += 1;
        }
    }
    assert!(close >= 190, "{close}/200 within 0.05 of target");
}

#[test]
fn rosa_solves_low_prior_task_on_most_seeds() {
    // logits giving the correct response probability 0.2 among 5
    let p = 0.2f64;
    let others = (1.0 - p) / 4.0;
    let logits = vec![p.ln(), others.ln(), others.ln(), others.ln(), others.ln()];
    let model = PolicyModel::tabular(1, 5).unwrap();
    let base = ParameterVector::new(logits).unwrap();
    let task = TaskInstance::new(0, 0, 5, 0).unwrap();
    let mut solved = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SessionConfig {
            method: Method::Rosa,
            mechanism: UpdateMechanism::FullParameter,
            ..SessionConfig::default()
        };
        let s = run_session(task.clone(), &model, base.clone(), cfg, &mut RuleOracle, &mut rng).unwrap();
        if s.solved_turn().is_some() {
            solved += 1;
        }
    }
    assert!(solved >= 95, "solved {solved}/100");
}
