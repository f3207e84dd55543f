//! KL-regularized re-weighting targets.
//!
//! Maximizing `E[r] − β·KL(π ‖ π_prev)` gives `π*(y) = π_prev(y)·e^{r(y)/β} / Z`.
//! When feedback exists for a single response `y_k` only, the reward is
//! `r_k·𝟙(y = y_k)` and the normalizer collapses to
//! `Z = 1 − (1 − e^{r_k/β})·π_prev(y_k)`.

use crate::error::{ensure_finite, ensure_index, Error, Result};

/// Whether a reward came from a binary or a continuous scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    Sparse,
    Dense,
}

/// Scalar feedback. Sparse values are exactly ±1, dense values lie in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSignal {
    value: f64,
    kind: RewardKind,
}

impl RewardSignal {
    pub const SUCCESS: RewardSignal = RewardSignal {
        value: 1.0,
        kind: RewardKind::Sparse,
    };
    pub const FAILURE: RewardSignal = RewardSignal {
        value: -1.0,
        kind: RewardKind::Sparse,
    };

    pub fn sparse(success: bool) -> Self {
        if success {
            Self::SUCCESS
        } else {
            Self::FAILURE
        }
    }

    pub fn dense(value: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!("dense reward {value} outside [-1, 1]")));
        }
        Ok(RewardSignal {
            value,
            kind: RewardKind::Dense,
        })
    }

    pub fn value(self) -> f64 {
        self.value
    }

    pub fn kind(self) -> RewardKind {
        self.kind
    }

    /// Only an exact +1 counts as task success.
    pub fn is_success(self) -> bool {
        self.value == 1.0
    }
}

/// Single-sample target at the observed response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetValue {
    /// Partition function `Z_k`.
    pub z: f64,
    /// `π̃*(y_k|x)`.
    pub target_prob: f64,
    pub beta: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// `Z = 1 − (1 − e^{r/β})·p`.
pub fn partition_single(p_yk: f64, r: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    check_prob(p_yk)?;
    if !r.is_finite() {
        return Err(Error::NonFinite { index: 0, value: r });
    }
    // -expm1 keeps 1 − e^{r/β} accurate when r/β is tiny.
    Ok(1.0 + (r / beta).exp_m1() * p_yk)
}

/// `π̃*(y_k) = p·e^{r/β} / Z`.
pub fn practical_target(p_yk: f64, r: f64, beta: f64) -> Result<TargetValue> {
    let z = partition_single(p_yk, r, beta)?;
    Ok(TargetValue {
        z,
        target_prob: p_yk * (r / beta).exp() / z,
        beta,
    })
}

/// Full re-weighted distribution `dist_i·e^{r_i/β} / Σ_j dist_j·e^{r_j/β}`.
pub fn closed_form_policy(dist: &[f64], rewards: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    if dist.len() != rewards.len() {
        return Err(Error::LengthMismatch {
            expected: dist.len(),
            got: rewards.len(),
        });
    }
    ensure_finite(rewards)?;
    check_distribution(dist)?;
    // shift exponents by their max so large 1/β cannot overflow
    let max = rewards
        .iter()
        .zip(dist)
        .filter(|(_, &p)| p > 0.0)
        .map(|(r, _)| r / beta)
        .fold(f64::NEG_INFINITY, f64::max);
    let weighted: Vec<f64> = dist
        .iter()
        .zip(rewards)
        .map(|(&p, &r)| p * (r / beta - max).exp())
        .collect();
    let z: f64 = weighted.iter().sum();
    Ok(weighted.into_iter().map(|w| w / z).collect())
}

/// Single-sample target over the whole response set:
/// `π_prev(y)·e^{r·𝟙(y=y_k)/β} / Z`.
pub fn practical_target_distribution(dist: &[f64], y_k: usize, r: f64, beta: f64) -> Result<Vec<f64>> {
    check_distribution(dist)?;
    ensure_index("response", y_k, dist.len())?;
    let t = practical_target(dist[y_k], r, beta)?;
    Ok(dist
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == y_k { t.target_prob } else { p / t.z })
        .collect())
}

/// `d = π̃*(y_k) − π_prev(y_k)`.
pub fn residual(target: &TargetValue, current: f64) -> f64 {
    target.target_prob - current
}

/// Rejects vectors with negative entries or a sum off by more than 1e-9.
pub fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::InvalidArgument("empty distribution".into()));
    }
    ensure_finite(dist)?;
    if let Some(i) = dist.iter().position(|&p| p < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "negative probability {} at index {i}",
            dist[i]
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}
