//! Parametric softmax policies over a finite response set.
//!
//! Three families share one flat parameter vector and a named block layout:
//!
//! | family            | blocks                                                        |
//! |-------------------|---------------------------------------------------------------|
//! | `tabular-softmax` | `logits[context, response]`                                   |
//! | `linear-softmax`  | `head.weight[feature, response]`, `head.bias[response]`       |
//! | `mlp-softmax`     | `hidden.weight[hidden, feature]`, `hidden.bias[hidden]`, then the head on `tanh` activations |
//!
//! A whole response is one categorical event, so `π(y|x)` is a single
//! softmax output and its Jacobian row is available in closed form.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{ensure_finite, ensure_index, ensure_len, Error, Result};

/// Policy family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyFamily {
    TabularSoftmax,
    LinearSoftmax,
    MlpSoftmax,
}

impl PolicyFamily {
    pub fn name(self) -> &'static str {
        match self {
            PolicyFamily::TabularSoftmax => "tabular-softmax",
            PolicyFamily::LinearSoftmax => "linear-softmax",
            PolicyFamily::MlpSoftmax => "mlp-softmax",
        }
    }
}

impl fmt::Display for PolicyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular-softmax" | "tabular" => Ok(PolicyFamily::TabularSoftmax),
            "linear-softmax" | "linear" => Ok(PolicyFamily::LinearSoftmax),
            "mlp-softmax" | "mlp" => Ok(PolicyFamily::MlpSoftmax),
            other => Err(Error::Config(format!("unknown policy family `{other}`"))),
        }
    }
}

/// A named, row-major block of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered blocks that tile `0..total()` with no gaps or overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    fn from_shapes(shapes: &[(&'static str, usize, usize)]) -> Self {
        let mut offset = 0;
        let blocks = shapes
            .iter()
            .map(|&(name, rows, cols)| {
                let b = Block {
                    name,
                    offset,
                    rows,
                    cols,
                };
                offset += rows * cols;
                b
            })
            .collect();
        Layout { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Flat parameter vector. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure_finite(&values)?;
        Ok(ParameterVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        ParameterVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// `self + delta`, rejecting non-finite results.
    pub fn add(&self, delta: &[f64]) -> Result<Self> {
        ensure_len(self.len(), delta.len())?;
        let sum: Vec<f64> = self.0.iter().zip(delta).map(|(a, b)| a + b).collect();
        ParameterVector::new(sum)
    }
}

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Intermediate values of one forward pass.
struct Forward {
    /// Head input: features (linear) or `tanh` activation plus shift (mlp).
    head_input: Vec<f64>,
    /// `tanh` activation before any shift (mlp only).
    activation: Vec<f64>,
    probs: Vec<f64>,
}

/// Gradient of `π(y|x)` with respect to the parameters and to the head input.
#[derive(Debug, Clone)]
pub struct PolicyGradient {
    pub params: Vec<f64>,
    /// `∂π(y|x)/∂h` for the head input `h`; empty for tabular policies.
    pub head_input: Vec<f64>,
}

/// A differentiable conditional distribution `π_θ(y|x)`.
///
/// Contexts are identified by index. Linear and MLP policies read a fixed
/// per-context feature row from `features`, which is not part of `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    family: PolicyFamily,
    context_count: usize,
    feature_dim: usize,
    hidden_dim: usize,
    response_count: usize,
    features: Vec<f64>,
    layout: Layout,
}

impl PolicyModel {
    pub fn tabular(context_count: usize, response_count: usize) -> Result<Self> {
        if context_count == 0 || response_count == 0 {
            return Err(Error::InvalidArgument(
                "context and response counts must be positive".into(),
            ));
        }
        Ok(PolicyModel {
            family: PolicyFamily::TabularSoftmax,
            context_count,
            feature_dim: 0,
            hidden_dim: 0,
            response_count,
            features: Vec::new(),
            layout: Layout::from_shapes(&[("logits", context_count, response_count)]),
        })
    }

    /// Linear softmax over `features`, a row-major `context_count × feature_dim` table.
    pub fn linear(features: Vec<f64>, feature_dim: usize, response_count: usize) -> Result<Self> {
        let context_count = Self::check_features(&features, feature_dim, response_count)?;
        Ok(PolicyModel {
            family: PolicyFamily::LinearSoftmax,
            context_count,
            feature_dim,
            hidden_dim: 0,
            response_count,
            features,
            layout: Layout::from_shapes(&[
                ("head.weight", feature_dim, response_count),
                ("head.bias", 1, response_count),
            ]),
        })
    }

    /// One `tanh` hidden layer followed by a linear head.
    pub fn mlp(features: Vec<f64>, feature_dim: usize, hidden_dim: usize, response_count: usize) -> Result<Self> {
        let context_count = Self::check_features(&features, feature_dim, response_count)?;
        if hidden_dim == 0 {
            return Err(Error::InvalidArgument("hidden_dim must be positive".into()));
        }
        Ok(PolicyModel {
            family: PolicyFamily::MlpSoftmax,
            context_count,
            feature_dim,
            hidden_dim,
            response_count,
            features,
            layout: Layout::from_shapes(&[
                ("hidden.weight", hidden_dim, feature_dim),
                ("hidden.bias", 1, hidden_dim),
                ("head.weight", hidden_dim, response_count),
                ("head.bias", 1, response_count),
            ]),
        })
    }

    fn check_features(features: &[f64], feature_dim: usize, response_count: usize) -> Result<usize> {
        if feature_dim == 0 || response_count == 0 {
            return Err(Error::InvalidArgument(
                "feature_dim and response_count must be positive".into(),
            ));
        }
        if features.is_empty() || !features.len().is_multiple_of(feature_dim) {
            return Err(Error::InvalidArgument(format!(
                "feature table of length {} is not a positive multiple of feature_dim {}",
                features.len(),
                feature_dim
            )));
        }
        ensure_finite(features)?;
        Ok(features.len() / feature_dim)
    }

    pub fn family(&self) -> PolicyFamily {
        self.family
    }

    pub fn context_count(&self) -> usize {
        self.context_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn response_count(&self) -> usize {
        self.response_count
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    /// Width of the head input: features for linear, hidden units for mlp.
    pub fn head_input_dim(&self) -> Option<usize> {
        match self.family {
            PolicyFamily::TabularSoftmax => None,
            PolicyFamily::LinearSoftmax => Some(self.feature_dim),
            PolicyFamily::MlpSoftmax => Some(self.hidden_dim),
        }
    }

    pub fn features(&self, x: usize) -> &[f64] {
        &self.features[x * self.feature_dim..(x + 1) * self.feature_dim]
    }

    /// Seeded initialization: tabular logits start at zero, weight blocks
    /// uniform on (-0.5, 0.5).
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let n = self.param_count();
        match self.family {
            PolicyFamily::TabularSoftmax => ParameterVector::zeros(n),
            _ => ParameterVector((0..n).map(|_| rng.random_range(-0.5..0.5)).collect()),
        }
    }

    fn block(&self, name: &str) -> &Block {
        self.layout.block(name).expect("block names are fixed per family")
    }

    fn check(&self, theta: &[f64], x: usize) -> Result<()> {
        ensure_len(self.param_count(), theta.len())?;
        ensure_finite(theta)?;
        ensure_index("context", x, self.context_count)
    }

    fn check_shift(&self, shift: Option<&[f64]>) -> Result<()> {
        if let Some(s) = shift {
            if self.family != PolicyFamily::MlpSoftmax {
                return Err(Error::Config(
                    "hidden-state shift requires an mlp-softmax policy".into(),
                ));
            }
            ensure_len(self.hidden_dim, s.len())?;
            ensure_finite(s)?;
        }
        Ok(())
    }

    fn forward(&self, theta: &[f64], x: usize, shift: Option<&[f64]>) -> Forward {
        let y_count = self.response_count;
        let (head_input, activation) = match self.family {
            PolicyFamily::TabularSoftmax => {
                let b = self.block("logits");
                let row = &theta[b.offset + x * y_count..b.offset + (x + 1) * y_count];
                return Forward {
                    head_input: Vec::new(),
                    activation: Vec::new(),
                    probs: softmax(row),
                };
            }
            PolicyFamily::LinearSoftmax => (self.features(x).to_vec(), Vec::new()),
            PolicyFamily::MlpSoftmax => {
                let w = &theta[self.block("hidden.weight").range()];
                let bias = &theta[self.block("hidden.bias").range()];
                let phi = self.features(x);
                let activation: Vec<f64> = (0..self.hidden_dim)
                    .map(|i| {
                        let row = &w[i * self.feature_dim..(i + 1) * self.feature_dim];
                        (dot(row, phi) + bias[i]).tanh()
                    })
                    .collect();
                let mut h = activation.clone();
                if let Some(s) = shift {
                    h.iter_mut().zip(s).for_each(|(h, s)| *h += s);
                }
                (h, activation)
            }
        };
        let w = &theta[self.block("head.weight").range()];
        let mut logits = theta[self.block("head.bias").range()].to_vec();
        for (i, &hi) in head_input.iter().enumerate() {
            let row = &w[i * y_count..(i + 1) * y_count];
            logits.iter_mut().zip(row).for_each(|(z, wij)| *z += hi * wij);
        }
        Forward {
            head_input,
            activation,
            probs: softmax(&logits),
        }
    }

    /// Full distribution `π_θ(·|x)`.
    pub fn distribution(&self, theta: &[f64], x: usize) -> Result<Vec<f64>> {
        self.distribution_shifted(theta, x, None)
    }

    /// Distribution with an additive shift on the hidden activation (mlp only).
    pub fn distribution_shifted(&self, theta: &[f64], x: usize, shift: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check(theta, x)?;
        self.check_shift(shift)?;
        Ok(self.forward(theta, x, shift).probs)
    }

    pub fn prob(&self, theta: &[f64], x: usize, y: usize) -> Result<f64> {
        ensure_index("response", y, self.response_count)?;
        Ok(self.distribution(theta, x)?[y])
    }

    /// Jacobian row `∇_θ π_θ(y|x)`.
    pub fn grad_prob(&self, theta: &[f64], x: usize, y: usize) -> Result<ParameterVector> {
        Ok(ParameterVector(self.grad_prob_shifted(theta, x, y, None)?.params))
    }

    /// Gradient of `π(y|x)` under an optional hidden shift, returning both
    /// the parameter gradient and the head-input gradient.
    pub fn grad_prob_shifted(
        &self,
        theta: &[f64],
        x: usize,
        y: usize,
        shift: Option<&[f64]>,
    ) -> Result<PolicyGradient> {
        self.check(theta, x)?;
        self.check_shift(shift)?;
        ensure_index("response", y, self.response_count)?;
        let fwd = self.forward(theta, x, shift);
        let y_count = self.response_count;
        let py = fwd.probs[y];
        // ∂π_y/∂z_j = π_y (δ_yj − π_j)
        let dz: Vec<f64> = fwd
            .probs
            .iter()
            .enumerate()
            .map(|(j, &pj)| py * (f64::from(u8::from(j == y)) - pj))
            .collect();

        let mut grad = vec![0.0; self.param_count()];
        if self.family == PolicyFamily::TabularSoftmax {
            let start = self.block("logits").offset + x * y_count;
            grad[start..start + y_count].copy_from_slice(&dz);
            return Ok(PolicyGradient {
                params: grad,
                head_input: Vec::new(),
            });
        }

        let head_w = self.block("head.weight").clone();
        let w = &theta[head_w.range()];
        let mut d_input = vec![0.0; fwd.head_input.len()];
        for (i, &hi) in fwd.head_input.iter().enumerate() {
            let row = &w[i * y_count..(i + 1) * y_count];
            let g = &mut grad[head_w.offset + i * y_count..head_w.offset + (i + 1) * y_count];
            for j in 0..y_count {
                g[j] = hi * dz[j];
            }
            d_input[i] = dot(row, &dz);
        }
        grad[self.block("head.bias").range()].copy_from_slice(&dz);

        if self.family == PolicyFamily::MlpSoftmax {
            let hw = self.block("hidden.weight").clone();
            let hb = self.block("hidden.bias").offset;
            let phi = self.features(x);
            for i in 0..self.hidden_dim {
                let t = fwd.activation[i];
                let da = d_input[i] * (1.0 - t * t);
                grad[hb + i] = da;
                let start = hw.offset + i * self.feature_dim;
                grad[start..start + self.feature_dim]
                    .iter_mut()
                    .zip(phi)
                    .for_each(|(g, f)| *g = da * f);
            }
        }
        Ok(PolicyGradient {
            params: grad,
            head_input: d_input,
        })
    }

    /// Forward-mode directional derivative `⟨∇_θ π_θ(y|x), v⟩`.
    pub fn jvp(&self, theta: &[f64], x: usize, y: usize, v: &[f64]) -> Result<f64> {
        self.check(theta, x)?;
        ensure_index("response", y, self.response_count)?;
        ensure_len(self.param_count(), v.len())?;
        ensure_finite(v)?;
        let fwd = self.forward(theta, x, None);
        let y_count = self.response_count;

        // tangent of the logits
        let dz: Vec<f64> = match self.family {
            PolicyFamily::TabularSoftmax => {
                let start = self.block("logits").offset + x * y_count;
                v[start..start + y_count].to_vec()
            }
            _ => {
                let d_input: Vec<f64> = if self.family == PolicyFamily::MlpSoftmax {
                    let dw = &v[self.block("hidden.weight").range()];
                    let db = &v[self.block("hidden.bias").range()];
                    let phi = self.features(x);
                    (0..self.hidden_dim)
                        .map(|i| {
                            let row = &dw[i * self.feature_dim..(i + 1) * self.feature_dim];
                            let t = fwd.activation[i];
                            (1.0 - t * t) * (dot(row, phi) + db[i])
                        })
                        .collect()
                } else {
                    vec![0.0; fwd.head_input.len()]
                };
                let w = &theta[self.block("head.weight").range()];
                let dw = &v[self.block("head.weight").range()];
                let mut dz = v[self.block("head.bias").range()].to_vec();
                for (i, (&hi, &dhi)) in fwd.head_input.iter().zip(&d_input).enumerate() {
                    let row = &w[i * y_count..(i + 1) * y_count];
                    let drow = &dw[i * y_count..(i + 1) * y_count];
                    for j in 0..y_count {
                        dz[j] += dhi * row[j] + hi * drow[j];
                    }
                }
                dz
            }
        };
        let mean_dz = dot(&fwd.probs, &dz);
        Ok(fwd.probs[y] * (dz[y] - mean_dz))
    }

    /// Reverse-mode product `s · ∇_θ π_θ(y|x)` for the scalar cotangent `s`.
    pub fn vjp(&self, theta: &[f64], x: usize, y: usize, s: f64) -> Result<ParameterVector> {
        if !s.is_finite() {
            return Err(Error::NonFinite { index: 0, value: s });
        }
        let mut g = self.grad_prob(theta, x, y)?.into_inner();
        g.iter_mut().for_each(|gi| *gi *= s);
        Ok(ParameterVector(g))
    }

    /// Draws `y ~ π_θ(·|x)`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: &[f64], x: usize, rng: &mut R) -> Result<usize> {
        let dist = self.distribution(theta, x)?;
        sample_index(&dist, rng)
    }
}

/// Draws an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> Result<usize> {
    let w = WeightedIndex::new(dist).map_err(|e| Error::InvalidArgument(format!("cannot sample distribution: {e}")))?;
    Ok(w.sample(rng))
}

/// Index of the largest probability; ties resolve to the lowest index.
pub fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}
