//! Binary soft-margin SVM trained in the dual, with FAR/FRR bias calibration.
//!
//! The solver is SMO with second-order working-set selection: each step picks
//! the maximal-violating index `i` from the up-set and the partner `j` that
//! maximizes the predicted objective decrease, then solves the two-variable
//! subproblem analytically. Training stops when the largest KKT violation
//! `max_{I_up} -y G - min_{I_low} -y G` falls below the tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularization values tried by the reference sweep.
pub const C_GRID: [f64; 3] = [1.0, 10.0, 100.0];

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelKind {
    Linear,
    Rbf,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "Linear",
            KernelKind::Rbf => "RBF",
        }
    }
}

/// RBF width: a fixed value, or `1 / (D * var)` over all training feature
/// entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gamma {
    Auto,
    Value(f64),
}

/// A kernel with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { .. } => KernelKind::Rbf,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Kernel::Linear => None,
            Kernel::Rbf { gamma } => Some(gamma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    pub c: f64,
    pub gamma: Gamma,
    /// Stop when the maximal KKT violation drops below this.
    pub tolerance: f64,
    /// Iteration budget in passes; one pass is `n` pair updates.
    pub max_iterations: usize,
}

impl SvmConfig {
    pub fn new(kernel: KernelKind, c: f64) -> Self {
        SvmConfig {
            kernel,
            c,
            gamma: Gamma::Auto,
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }

    pub fn with_gamma(mut self, gamma: Gamma) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid(format!("C must be > 0, got {}", self.c)));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::invalid(format!("gamma must be > 0, got {g}")));
            }
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }

    /// The kernel this config trains with on `features`.
    pub fn resolve_kernel(&self, features: &[Vec<f64>]) -> Kernel {
        match (self.kernel, self.gamma) {
            (KernelKind::Linear, _) => Kernel::Linear,
            (KernelKind::Rbf, Gamma::Value(gamma)) => Kernel::Rbf { gamma },
            (KernelKind::Rbf, Gamma::Auto) => Kernel::Rbf {
                gamma: auto_gamma(features),
            },
        }
    }
}

/// `1 / (D * var)` with `var` the variance of every entry of the feature
/// matrix; `1 / D` when that variance is zero.
pub fn auto_gamma(features: &[Vec<f64>]) -> f64 {
    let dim = features.first().map_or(1, Vec::len).max(1) as f64;
    let count = features.iter().map(Vec::len).sum::<usize>() as f64;
    if count == 0.0 {
        return 1.0 / dim;
    }
    let mean = features.iter().flatten().sum::<f64>() / count;
    let var = features.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    if var > 0.0 {
        1.0 / (dim * var)
    } else {
        1.0 / dim
    }
}

/// A trained classifier: `decision(x) = sum_i coef_i K(sv_i, x) + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
    /// Dual objective `sum(alpha) - alpha' Q alpha / 2` at the solution.
    pub dual_objective: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub kkt_gap: f64,
}

impl SvmModel {
    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, coef)| coef * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// The same model with a different bias.
    pub fn with_bias(&self, bias: f64) -> SvmModel {
        SvmModel { bias, ..self.clone() }
    }
}

fn check_labels(labels: &[i8]) -> Result<(usize, usize)> {
    let mut pos = 0;
    let mut neg = 0;
    for (i, &y) in labels.iter().enumerate() {
        match y {
            1 => pos += 1,
            -1 => neg += 1,
            other => return Err(Error::invalid(format!("label {i} is {other}, expected +1 or -1"))),
        }
    }
    Ok((pos, neg))
}

fn check_features(features: &[Vec<f64>], dim: Option<usize>) -> Result<usize> {
    let dim = match dim.or_else(|| features.first().map(Vec::len)) {
        Some(d) => d,
        None => return Ok(0),
    };
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::invalid(format!(
                "feature vector {i} has dimension {}, expected {dim}",
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature vector {i} has non-finite entries")));
        }
    }
    Ok(dim)
}

/// Trains a binary SVM on `features` with labels in `{+1, -1}`.
pub fn train(features: &[Vec<f64>], labels: &[i8], cfg: &SvmConfig) -> Result<SvmModel> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let (pos, neg) = check_labels(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("training data must contain both classes"));
    }
    check_features(features, None)?;

    let kernel = cfg.resolve_kernel(features);
    let n = features.len();
    let c = cfg.c;
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();

    // Q_ij = y_i y_j K(x_i, x_j)
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = y[i] * y[j] * kernel.eval(&features[i], &features[j]);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    let qd: Vec<f64> = (0..n).map(|i| q[i * n + i]).collect();

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let at_upper = |a: f64| a >= c;
    let at_lower = |a: f64| a <= 0.0;

    let limit = cfg.max_iterations.saturating_mul(n.max(1));
    let mut iterations = 0;
    let gap = loop {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 {
                !at_upper(alpha[t])
            } else {
                !at_lower(alpha[t])
            };
            if in_up && v >= gmax {
                gmax = v;
                i_sel = t;
            }
        }
        // j: second-order selection in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        if i_sel != usize::MAX {
            let qi = &q[i_sel * n..(i_sel + 1) * n];
            for t in 0..n {
                let in_low = if y[t] > 0.0 {
                    !at_lower(alpha[t])
                } else {
                    !at_upper(alpha[t])
                };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = qd[i_sel] + qd[t] - 2.0 * y[i_sel] * y[t] * qi[t];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        let gap = gmax + gmax2;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < cfg.tolerance {
            break gap.max(0.0);
        }
        if iterations >= limit {
            return Err(Error::NotConverged { iterations, gap });
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let qij = q[i * n + j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        let (qi, qj) = (&q[i * n..(i + 1) * n], &q[j * n..(j + 1) * n]);
        for k in 0..n {
            grad[k] += qi[k] * di + qj[k] * dj;
        }
    };

    // rho from free variables, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if at_upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        0.5 * (ub + lb)
    };

    // f(alpha) = alpha'Qalpha/2 - sum(alpha) = (alpha'G - sum(alpha)) / 2
    let primal_form: f64 = alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>() / 2.0;

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(features[t].clone());
            dual_coefs.push(alpha[t] * y[t]);
        }
    }
    Ok(SvmModel {
        support_vectors,
        dual_coefs,
        bias: -rho,
        kernel,
        c,
        dual_objective: -primal_form,
        iterations,
        kkt_gap: gap,
    })
}

pub fn decision_scores(model: &SvmModel, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_features(features, model.dim())?;
    Ok(features.iter().map(|x| model.decision(x)).collect())
}

/// Per-dimension z-scoring fitted on training features. Dimensions with zero
/// spread are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let dim = check_features(features, None)?;
        if features.is_empty() {
            return Err(Error::invalid("cannot standardize an empty feature set"));
        }
        let n = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for f in features {
            for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd > 1e-12 * m.abs() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_features(xs, Some(self.mean.len()))?;
        Ok(xs.iter().map(|x| self.transform(x)).collect())
    }
}

/// False acceptance and false rejection rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub rates: RatePair,
    pub accuracy: f64,
}

/// Rates when accepting exactly the samples scoring above `threshold`.
pub fn compute_rates(scores: &[f64], labels: &[i8], threshold: f64) -> Result<Rates> {
    if scores.is_empty() {
        return Err(Error::invalid("no scores to evaluate"));
    }
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (pos, neg) = check_labels(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("FAR and FRR need both classes present"));
    }
    let mut false_accept = 0usize;
    let mut false_reject = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        let accepted = s > threshold;
        if y < 0 && accepted {
            false_accept += 1;
        }
        if y > 0 && !accepted {
            false_reject += 1;
        }
    }
    Ok(Rates {
        rates: RatePair {
            far: false_accept as f64 / neg as f64,
            frr: false_reject as f64 / pos as f64,
        },
        accuracy: (scores.len() - false_accept - false_reject) as f64 / scores.len() as f64,
    })
}

/// Result of balancing FAR against FRR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancedThreshold {
    pub threshold: f64,
    pub rates: RatePair,
    /// Whether `|FAR - FRR| < 0.01` was reached.
    pub within_one_percent: bool,
}

/// Picks the threshold minimizing `|FAR - FRR|` among midpoints between
/// consecutive distinct scores (plus one below and one above all scores).
/// Ties go to the smaller FAR, then the smaller FRR.
pub fn balance_threshold(scores: &[f64], labels: &[i8]) -> Result<BalancedThreshold> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (pos, neg) = check_labels(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("calibration needs both classes present"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("calibration scores must be finite"));
    }
    let mut order: Vec<(f64, i8)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    // |FA/neg - FR/pos| compared exactly as |FA*pos - FR*neg|.
    let imbalance = |fa: usize, fr: usize| (fa * pos).abs_diff(fr * neg);
    let mut fa = neg;
    let mut fr = 0;
    let mut best = (imbalance(fa, fr), fa, fr, order[0].0 - 1.0);
    let mut k = 0;
    while k < order.len() {
        let score = order[k].0;
        while k < order.len() && order[k].0 == score {
            if order[k].1 > 0 {
                fr += 1;
            } else {
                fa -= 1;
            }
            k += 1;
        }
        let threshold = if k < order.len() {
            score + 0.5 * (order[k].0 - score)
        } else {
            score + 1.0
        };
        let cand = (imbalance(fa, fr), fa, fr, threshold);
        if (cand.0, cand.1, cand.2) < (best.0, best.1, best.2) {
            best = cand;
        }
    }
    let (gap, fa, fr, threshold) = best;
    Ok(BalancedThreshold {
        threshold,
        rates: RatePair {
            far: fa as f64 / neg as f64,
            frr: fr as f64 / pos as f64,
        },
        within_one_percent: gap * 100 < pos * neg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: SvmModel,
    pub balance: BalancedThreshold,
}

/// Shifts the bias so that thresholding the decision at zero balances FAR and
/// FRR on the calibration set. Only the bias changes.
pub fn calibrate_bias(model: &SvmModel, features: &[Vec<f64>], labels: &[i8]) -> Result<Calibration> {
    let scores = decision_scores(model, features)?;
    let balance = balance_threshold(&scores, labels)?;
    Ok(Calibration {
        model: model.with_bias(model.bias - balance.threshold),
        balance,
    })
}
