//! Matrix-free conjugate gradient on the Gauss–Newton normal equations
//! `(JᵀJ + λI)·Δθ = Jᵀd`.
//!
//! The solver only sees `J` through [`LinearOperator::apply`] and
//! [`LinearOperator::apply_adjoint`]; `JᵀJ` is never formed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::policy::dot;

/// Jacobian-like operator from parameter space (`input_dim`) to residual
/// space (`output_dim`).
pub trait LinearOperator {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// `J v`
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    /// `Jᵀ s`
    fn apply_adjoint(&self, s: &[f64]) -> Vec<f64>;
}

/// Operator defined by a pair of closures.
pub struct FnOperator<F, G> {
    input_dim: usize,
    output_dim: usize,
    forward: F,
    adjoint: G,
}

impl<F, G> FnOperator<F, G>
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(input_dim: usize, output_dim: usize, forward: F, adjoint: G) -> Self {
        FnOperator {
            input_dim,
            output_dim,
            forward,
            adjoint,
        }
    }
}

impl<F, G> LinearOperator for FnOperator<F, G>
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (self.forward)(v)
    }

    fn apply_adjoint(&self, s: &[f64]) -> Vec<f64> {
        (self.adjoint)(s)
    }
}

/// Operator whose rows are explicit gradient vectors (one per residual).
#[derive(Debug, Clone)]
pub struct RowOperator {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl RowOperator {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        for r in &rows {
            ensure_len(dim, r.len())?;
        }
        Ok(RowOperator { dim, rows })
    }
}

impl LinearOperator for RowOperator {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| dot(r, v)).collect()
    }

    fn apply_adjoint(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (row, &si) in self.rows.iter().zip(s) {
            if si != 0.0 {
                out.iter_mut().zip(row).for_each(|(o, r)| *o += si * r);
            }
        }
        out
    }
}

/// CG stopping rule and damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when `‖(JᵀJ+λI)x − Jᵀd‖ ≤ rel_tolerance·‖Jᵀd‖`.
    pub rel_tolerance: f64,
    /// `None` means `min(P, 100)`.
    pub max_iterations: Option<usize>,
    /// Tikhonov damping `λ ≥ 0`.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tolerance: 1e-8,
            max_iterations: None,
            damping: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::Config(format!(
                "solver tolerance must be positive, got {}",
                self.rel_tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(Error::Config(format!(
                "damping must be finite and non-negative, got {}",
                self.damping
            )));
        }
        Ok(())
    }

    pub fn iteration_cap(&self, dim: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| dim.clamp(1, 100))
    }
}

/// Result of a CG solve. A non-converged solve still carries its iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub delta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final `‖(JᵀJ+λI)x − Jᵀd‖`, recomputed from the operator.
    pub residual_norm: f64,
    /// `‖Jᵀd‖`
    pub rhs_norm: f64,
}

const ADJOINT_PROBE_SEED: u64 = 0x5eed_ad01;

/// One randomized probe of `⟨Jv, s⟩ = ⟨v, Jᵀs⟩`.
pub fn check_adjoint<O: LinearOperator + ?Sized>(op: &O) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(ADJOINT_PROBE_SEED);
    let v: Vec<f64> = (0..op.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s: Vec<f64> = (0..op.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let jv = op.apply(&v);
    let jts = op.apply_adjoint(&s);
    ensure_len(op.output_dim(), jv.len())?;
    ensure_len(op.input_dim(), jts.len())?;
    let forward = dot(&jv, &s);
    let adjoint = dot(&v, &jts);
    let scale = forward.abs().max(adjoint.abs()).max(1.0);
    if (forward - adjoint).abs() > 1e-10 * scale {
        return Err(Error::AdjointMismatch { forward, adjoint });
    }
    Ok(())
}

fn normal_apply<O: LinearOperator + ?Sized>(op: &O, v: &[f64], damping: f64) -> Vec<f64> {
    let mut out = op.apply_adjoint(&op.apply(v));
    if damping > 0.0 {
        out.iter_mut().zip(v).for_each(|(o, vi)| *o += damping * vi);
    }
    out
}

/// Solves `(JᵀJ + λI)·x = Jᵀd` by CG from `x = 0`.
///
/// Starting from zero keeps every iterate in the row space of `J`, so with
/// `λ = 0` a rank-deficient system converges to the minimum-norm
/// least-squares solution.
pub fn solve_normal_equations<O: LinearOperator + ?Sized>(op: &O, d: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    ensure_len(op.output_dim(), d.len())?;
    ensure_finite(d)?;
    check_adjoint(op)?;

    let n = op.input_dim();
    let b = op.apply_adjoint(d);
    ensure_len(n, b.len())?;
    let rhs_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(Solution {
            delta: x,
            iterations: 0,
            converged: true,
            residual_norm: 0.0,
            rhs_norm,
        });
    }

    let tol = cfg.rel_tolerance * rhs_norm;
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..cfg.iteration_cap(n) {
        let q = normal_apply(op, &p, cfg.damping);
        let pq = dot(&p, &q);
        if !pq.is_finite() {
            return Err(Error::NonFinite {
                index: iterations,
                value: pq,
            });
        }
        if pq <= 0.0 {
            // direction fell into the null space; nothing left to reduce
            break;
        }
        let alpha = rs / pq;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        iterations += 1;
        let rs_new = dot(&r, &r);
        if !rs_new.is_finite() {
            return Err(Error::NonFinite {
                index: iterations,
                value: rs_new,
            });
        }
        if rs_new.sqrt() <= tol {
            converged = true;
            break;
        }
        let ratio = rs_new / rs;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + ratio * *pi);
        rs = rs_new;
    }

    let ax = normal_apply(op, &x, cfg.damping);
    let residual_norm = ax.iter().zip(&b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    ensure_finite(&x)?;
    Ok(Solution {
        delta: x,
        iterations,
        converged: converged || residual_norm <= tol,
        residual_norm,
        rhs_norm,
    })
}

/// Closed form for a single residual row `g`: `Δθ = g·d / (‖g‖² + λ)`.
pub fn rank_one_solution(g: &[f64], d: f64, damping: f64) -> Result<Vec<f64>> {
    let gg = dot(g, g);
    if gg == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let scale = d / (gg + damping);
    Ok(g.iter().map(|gi| gi * scale).collect())
}
