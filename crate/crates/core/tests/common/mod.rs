//! Reference solvers for the SVM dual, kept separate from the library's SMO
//! code path.
//!
//! The dual is `max sum(a) - a'Qa/2` subject to `y'a = 0`, `0 <= a <= C`, with
//! `Q_ij = y_i y_j K_ij`.

#![allow(dead_code)]

/// Kernel matrix computed directly, without the library's kernel code.
pub fn kernel_matrix(x: &[Vec<f64>], rbf_gamma: Option<f64>) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = match rbf_gamma {
                None => x[i][0] * x[j][0] + x[i][1] * x[j][1],
                Some(g) => {
                    let dx = x[i][0] - x[j][0];
                    let dy = x[i][1] - x[j][1];
                    (-g * (dx * dx + dy * dy)).exp()
                }
            };
        }
    }
    k
}

fn q_matrix(k: &[Vec<f64>], y: &[f64]) -> Vec<Vec<f64>> {
    let n = y.len();
    (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect())
        .collect()
}

pub fn dual_objective(k: &[Vec<f64>], y: &[f64], a: &[f64]) -> f64 {
    let q = q_matrix(k, y);
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * q[i][j] * a[j];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot is at most `rel_tol` times the largest entry.
pub fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>, rel_tol: f64) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() <= rel_tol * scale {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let (top, rest) = m.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (k, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for (a, b) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *a -= f * b;
                }
                rhs[col + 1 + k] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

/// Log-barrier interior-point solution of the dual. The final barrier
/// parameter leaves a duality gap of at most `2n / t < 1e-9`.
pub fn barrier_dual(k: &[Vec<f64>], y: &[f64], c: f64) -> Vec<f64> {
    let n = y.len();
    let q = q_matrix(k, y);
    let n_pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
    let n_neg = n as f64 - n_pos;
    let big = n_pos.max(n_neg);
    // strictly feasible start with y'a = 0
    let mut a: Vec<f64> = y
        .iter()
        .map(|&v| 0.5 * c * if v > 0.0 { n_neg / big } else { n_pos / big })
        .collect();

    let phi = |a: &[f64], t: f64| -> f64 {
        let mut f = 0.0;
        for i in 0..n {
            for j in 0..n {
                f += 0.5 * a[i] * q[i][j] * a[j];
            }
            f -= a[i];
        }
        t * f - a.iter().map(|&ai| ai.ln() + (c - ai).ln()).sum::<f64>()
    };

    let mut t = 1.0;
    while 2.0 * n as f64 / t > 1e-10 {
        for _ in 0..200 {
            let qa: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * a[j]).sum()).collect();
            let g: Vec<f64> = (0..n)
                .map(|i| t * (qa[i] - 1.0) - 1.0 / a[i] + 1.0 / (c - a[i]))
                .collect();
            let mut m = vec![vec![0.0; n + 1]; n + 1];
            for i in 0..n {
                for j in 0..n {
                    m[i][j] = t * q[i][j];
                }
                m[i][i] += 1.0 / (a[i] * a[i]) + 1.0 / ((c - a[i]) * (c - a[i]));
                m[i][n] = y[i];
                m[n][i] = y[i];
            }
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            rhs.push(0.0);
            let sol = solve_dense(m, rhs, 0.0).expect("barrier KKT system is nonsingular");
            let dx = &sol[..n];
            let decrement: f64 = -g.iter().zip(dx).map(|(gi, di)| gi * di).sum::<f64>();
            if decrement / 2.0 < 1e-13 {
                break;
            }
            // largest step keeping the iterate strictly inside the box
            let mut step: f64 = 1.0;
            for i in 0..n {
                if dx[i] < 0.0 {
                    step = step.min(-0.99 * a[i] / dx[i]);
                } else if dx[i] > 0.0 {
                    step = step.min(0.99 * (c - a[i]) / dx[i]);
                }
            }
            let base = phi(&a, t);
            loop {
                let trial: Vec<f64> = a.iter().zip(dx).map(|(ai, di)| ai + step * di).collect();
                if phi(&trial, t) <= base - 0.25 * step * decrement || step < 1e-14 {
                    a = trial;
                    break;
                }
                step *= 0.5;
            }
        }
        t *= 8.0;
    }
    a
}

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Lower,
    Free,
    Upper,
}

/// Brute force over every assignment of each variable to {0, free, C}. Only
/// for tiny `n`; returns the best KKT point found.
pub fn enumerate_dual(k: &[Vec<f64>], y: &[f64], c: f64) -> Option<Vec<f64>> {
    let n = y.len();
    assert!(n <= 8, "enumeration is exponential");
    let q = q_matrix(k, y);
    let tol = 1e-9 * (1.0 + c);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut status = Vec::with_capacity(n);
        let mut rest = code;
        for _ in 0..n {
            status.push(match rest % 3 {
                0 => Status::Lower,
                1 => Status::Free,
                _ => Status::Upper,
            });
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == Status::Free).collect();
        let mut a: Vec<f64> = status
            .iter()
            .map(|s| if *s == Status::Upper { c } else { 0.0 })
            .collect();
        let bias_candidates: Vec<f64>;
        if free.is_empty() {
            if y.iter().zip(&a).map(|(yi, ai)| yi * ai).sum::<f64>().abs() > tol {
                continue;
            }
            // any b in the interval allowed by the bound variables
            let g: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| q[i][j] * a[j]).sum::<f64>() - 1.0)
                .collect();
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..n {
                // lower: g_i + b y_i >= 0 ; upper: g_i + b y_i <= 0
                let bound = -g[i] / y[i];
                let lower_side = (status[i] == Status::Lower) == (y[i] > 0.0);
                if lower_side {
                    lo = lo.max(bound);
                } else {
                    hi = hi.min(bound);
                }
            }
            if lo > hi + tol {
                continue;
            }
            bias_candidates = vec![0.5 * (lo.max(-1e6) + hi.min(1e6))];
        } else {
            let f = free.len();
            let mut m = vec![vec![0.0; f + 1]; f + 1];
            let mut rhs = vec![0.0; f + 1];
            for (r, &i) in free.iter().enumerate() {
                for (cc, &j) in free.iter().enumerate() {
                    m[r][cc] = q[i][j];
                }
                m[r][f] = y[i];
                rhs[r] = 1.0
                    - (0..n)
                        .filter(|&j| status[j] == Status::Upper)
                        .map(|j| q[i][j] * c)
                        .sum::<f64>();
            }
            for (cc, &j) in free.iter().enumerate() {
                m[f][cc] = y[j];
            }
            rhs[f] = -(0..n)
                .filter(|&j| status[j] == Status::Upper)
                .map(|j| y[j] * c)
                .sum::<f64>();
            let Some(sol) = solve_dense(m, rhs, 1e-12) else {
                continue;
            };
            if free.iter().enumerate().any(|(r, _)| sol[r] < -tol || sol[r] > c + tol) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                a[i] = sol[r].clamp(0.0, c);
            }
            bias_candidates = vec![sol[f]];
        }
        let b = bias_candidates[0];
        let feasible = (0..n).all(|i| {
            let g = (0..n).map(|j| q[i][j] * a[j]).sum::<f64>() - 1.0 + b * y[i];
            match status[i] {
                Status::Lower => g >= -1e-7,
                Status::Upper => g <= 1e-7,
                Status::Free => true,
            }
        });
        if !feasible {
            continue;
        }
        let obj = dual_objective(k, y, &a);
        if best.as_ref().is_none_or(|(o, _)| obj > *o) {
            best = Some((obj, a));
        }
    }
    best.map(|(_, a)| a)
}

/// Decision function built from reference multipliers: bias from free
/// multipliers, else the midpoint of the interval the bounds allow.
pub struct OracleModel {
    pub points: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub rbf_gamma: Option<f64>,
}

impl OracleModel {
    pub fn new(x: &[Vec<f64>], y: &[f64], a: &[f64], c: f64, rbf_gamma: Option<f64>) -> Self {
        let k = kernel_matrix(x, rbf_gamma);
        let n = y.len();
        let coef: Vec<f64> = a.iter().zip(y).map(|(ai, yi)| ai * yi).collect();
        let s: Vec<f64> = (0..n).map(|i| (0..n).map(|j| coef[j] * k[i][j]).sum()).collect();
        let eps = 1e-6 * c;
        let free: Vec<usize> = (0..n).filter(|&i| a[i] > eps && a[i] < c - eps).collect();
        let bias = if !free.is_empty() {
            free.iter().map(|&i| y[i] - s[i]).sum::<f64>() / free.len() as f64
        } else {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..n {
                let at_zero = a[i] <= eps;
                let edge = y[i] - s[i];
                if at_zero == (y[i] > 0.0) {
                    lo = lo.max(edge);
                } else {
                    hi = hi.min(edge);
                }
            }
            0.5 * (lo + hi)
        };
        OracleModel {
            points: x.to_vec(),
            coef,
            bias,
            rbf_gamma,
        }
    }

    pub fn decision(&self, p: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.coef)
            .map(|(x, c)| {
                let kv = match self.rbf_gamma {
                    None => x[0] * p[0] + x[1] * p[1],
                    Some(g) => {
                        let dx = x[0] - p[0];
                        let dy = x[1] - p[1];
                        (-g * (dx * dx + dy * dy)).exp()
                    }
                };
                c * kv
            })
            .sum::<f64>()
            + self.bias
    }
}

pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
    pub y: Vec<f64>,
}

/// Points in [-2, 2]^2, labelled either by a line or at random, with both
/// classes present.
pub fn random_instance(seed: u64, n: usize) -> Instance {
    use rand::Rng;
    let mut rng = tapaug::seed::rng_from(seed);
    loop {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let noisy = rng.random_bool(0.5);
        let labels: Vec<i8> = x
            .iter()
            .map(|p| {
                let v = if noisy {
                    rng.random_range(-1.0..1.0)
                } else {
                    p[0] - 0.5 * p[1]
                };
                if v > 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        if labels.contains(&1) && labels.contains(&-1) {
            let y = labels.iter().map(|&l| l as f64).collect();
            return Instance { x, labels, y };
        }
    }
}
