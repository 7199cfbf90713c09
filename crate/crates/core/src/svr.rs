//! Epsilon-insensitive support vector regression with a Gaussian kernel,
//! trained by sequential minimal optimization on the dual.
//!
//! The dual is solved in the doubled form: variables `beta = [a+, a-]`,
//! labels `y = [+1.., -1..]`, linear term `p = [lambda - t, lambda + t]`,
//! Hessian `Q_st = y_s y_t K(x_s, x_t)`, subject to `y' beta = 0` and
//! `0 <= beta <= C`. Working pairs are chosen with second-order information.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian kernel `exp(-|x - y|^2 / gamma)`.
pub fn kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    (-sq_dist(x, y) / gamma).exp()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrParams {
    /// Box bound on each multiplier.
    pub c: f64,
    /// Half-width of the insensitive tube.
    pub lambda: f64,
    pub gamma: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Kernel row cache size in megabytes.
    pub cache_mb: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            lambda: 0.1,
            gamma: 1.0,
            tolerance: 1e-5,
            max_iterations: 1_000_000,
            cache_mb: 256,
        }
    }
}

impl SvrParams {
    pub fn new(c: f64, lambda: f64, gamma: f64) -> Self {
        Self {
            c,
            lambda,
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config("SVR C must be positive and finite"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("SVR lambda must be non-negative and finite"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("SVR gamma must be positive and finite"));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::config("SVR tolerance and iteration cap must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `a+ - a-` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub lambda: f64,
    pub dim: usize,
    /// Pair updates the trainer performed.
    pub iterations: usize,
}

/// Largest value returned by [`SvrModel::confidence`].
pub const CONFIDENCE_CAP: f64 = 1e12;

impl SvrModel {
    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_counted(x).0
    }

    /// Prediction and the number of kernel evaluations it took.
    pub fn predict_counted(&self, x: &[f64]) -> (f64, usize) {
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, a)| a * kernel(sv, x, self.gamma))
            .sum();
        (s + self.bias, self.support_vectors.len())
    }

    /// Inverse of the summed Euclidean distance from `x` to every support
    /// vector, capped at [`CONFIDENCE_CAP`]. Zero when there are none.
    pub fn confidence(&self, x: &[f64]) -> f64 {
        if self.support_vectors.is_empty() {
            return 0.0;
        }
        let d: f64 = self.support_vectors.iter().map(|sv| sq_dist(sv, x).sqrt()).sum();
        if d > 0.0 {
            (1.0 / d).min(CONFIDENCE_CAP)
        } else {
            CONFIDENCE_CAP
        }
    }

    const HEADER: &'static str = "bsm-svr 1";

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", Self::HEADER);
        let _ = writeln!(s, "gamma {:.16e}", self.gamma);
        let _ = writeln!(s, "c {:.16e}", self.c);
        let _ = writeln!(s, "lambda {:.16e}", self.lambda);
        let _ = writeln!(s, "bias {:.16e}", self.bias);
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "iterations {}", self.iterations);
        let _ = writeln!(s, "support_vectors {}", self.n_support());
        for (sv, a) in self.support_vectors.iter().zip(&self.dual_coefs) {
            let _ = write!(s, "{a:.16e}");
            for v in sv {
                let _ = write!(s, " {v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")));
        let (no, header) = next("header")?;
        if header != Self::HEADER {
            return Err(err(no, format!("expected header '{}', found '{header}'", Self::HEADER)));
        }
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (no, l) = next(key)?;
            match l.split_once(' ') {
                Some((k, v)) if k == key => Ok((no, v.trim().to_string())),
                _ => Err(err(no, format!("expected '{key} <value>'"))),
            }
        };
        let real = |(no, v): (usize, String)| v.parse::<f64>().map_err(|e| err(no, format!("bad number '{v}': {e}")));
        let int = |(no, v): (usize, String)| v.parse::<usize>().map_err(|e| err(no, format!("bad integer '{v}': {e}")));
        let gamma = real(field("gamma")?)?;
        let c = real(field("c")?)?;
        let lambda = real(field("lambda")?)?;
        let bias = real(field("bias")?)?;
        let dim = int(field("dim")?)?;
        let iterations = int(field("iterations")?)?;
        let count = int(field("support_vectors")?)?;
        let mut support_vectors = Vec::with_capacity(count);
        let mut dual_coefs = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, l) = next("support vector")?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| err(no, format!("bad number '{t}': {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim + 1 {
                return Err(err(no, format!("expected {} values, found {}", dim + 1, vals.len())));
            }
            dual_coefs.push(vals[0]);
            support_vectors.push(vals[1..].to_vec());
        }
        Ok(Self {
            support_vectors,
            dual_coefs,
            bias,
            gamma,
            c,
            lambda,
            dim,
            iterations,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Least-recently-used cache of kernel Gram rows.
struct RowCache<'a> {
    xs: &'a [Vec<f64>],
    gamma: f64,
    rows: Vec<Option<Box<[f64]>>>,
    last_use: Vec<u64>,
    resident: Vec<usize>,
    capacity: usize,
    tick: u64,
}

impl<'a> RowCache<'a> {
    fn new(xs: &'a [Vec<f64>], gamma: f64, cache_mb: usize) -> Self {
        let l = xs.len();
        let per_row = (l * std::mem::size_of::<f64>()).max(1);
        let capacity = ((cache_mb << 20) / per_row).clamp(2, l.max(2));
        Self {
            xs,
            gamma,
            rows: vec![None; l],
            last_use: vec![0; l],
            resident: Vec::new(),
            capacity,
            tick: 0,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.tick += 1;
        self.last_use[i] = self.tick;
        if self.rows[i].is_none() {
            if self.resident.len() >= self.capacity {
                let (pos, _) = self
                    .resident
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r != i)
                    .min_by_key(|(_, &r)| self.last_use[r])
                    .expect("cache holds at least two rows");
                let victim = self.resident.swap_remove(pos);
                self.rows[victim] = None;
            }
            let xi = &self.xs[i];
            let gamma = self.gamma;
            let row: Box<[f64]> = self.xs.iter().map(|xj| kernel(xi, xj, gamma)).collect();
            self.rows[i] = Some(row);
            self.resident.push(i);
        }
        self.rows[i].as_deref().expect("row just filled")
    }
}

/// Train on `(input, target)` pairs.
pub fn train_svr(inputs: &[Vec<f64>], targets: &[f64], params: &SvrParams) -> Result<SvrModel> {
    params.validate()?;
    let l = inputs.len();
    if l < 2 {
        return Err(Error::config(format!("SVR training needs at least 2 records, got {l}")));
    }
    if targets.len() != l {
        return Err(Error::Dimension {
            what: "SVR targets",
            expected: l,
            got: targets.len(),
        });
    }
    let dim = inputs[0].len();
    for x in inputs {
        if x.len() != dim {
            return Err(Error::Dimension {
                what: "SVR input",
                expected: dim,
                got: x.len(),
            });
        }
        crate::error::check_finite("SVR input", x)?;
    }
    crate::error::check_finite("SVR target", targets)?;

    let c = params.c;
    let n2 = 2 * l;
    let y = |t: usize| if t < l { 1.0 } else { -1.0 };
    let mut beta = vec![0.0; n2];
    let mut grad: Vec<f64> = (0..n2)
        .map(|t| if t < l { params.lambda - targets[t] } else { params.lambda + targets[t - l] })
        .collect();
    let mut cache = RowCache::new(inputs, params.gamma, params.cache_mb);
    let tau = 1e-12;
    let mut iterations = 0;

    loop {
        // Maximal violating index i by first-order information.
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n2 {
            let yg = -y(t) * grad[t];
            let up = if y(t) > 0.0 { beta[t] < c } else { beta[t] > 0.0 };
            if up && yg >= gmax {
                gmax = yg;
                i_sel = t;
            }
        }
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        let row_i: Option<Vec<f64>> = if i_sel != usize::MAX { Some(cache.row(i_sel % l).to_vec()) } else { None };
        for t in 0..n2 {
            let low = if y(t) > 0.0 { beta[t] > 0.0 } else { beta[t] < c };
            if !low {
                continue;
            }
            let yg = y(t) * grad[t];
            if yg >= gmax2 {
                gmax2 = yg;
            }
            if let Some(ri) = &row_i {
                let diff = gmax + yg;
                if diff > 0.0 {
                    // Q_ii + Q_tt - 2 y_i y_t Q_it with unit kernel diagonal.
                    let k_it = ri[t % l];
                    let quad = (2.0 - 2.0 * k_it).max(tau);
                    let obj = -diff * diff / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
        }
        let violation = gmax + gmax2;
        if violation < params.tolerance || j_sel == usize::MAX {
            break;
        }
        if iterations >= params.max_iterations {
            return Err(Error::NotConverged { iterations, violation });
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (yi, yj) = (y(i), y(j));
        let ri = row_i.expect("i selected");
        let rj: Vec<f64> = cache.row(j % l).to_vec();
        let qij = yi * yj * ri[j % l];
        let (old_i, old_j) = (beta[i], beta[j]);
        if yi != yj {
            let quad = (2.0 + 2.0 * qij).max(tau);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * qij).max(tau);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }
        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for t in 0..n2 {
            let yt = y(t);
            grad[t] += yt * (yi * ri[t % l] * di + yj * rj[t % l] * dj);
        }
    }

    // Bias from free multipliers, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n2 {
        let yg = y(t) * grad[t];
        if beta[t] >= c {
            if y(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[t] <= 0.0 {
            if y(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for t in 0..l {
        let a = beta[t] - beta[t + l];
        if a != 0.0 {
            support_vectors.push(inputs[t].clone());
            dual_coefs.push(a);
        }
    }
    Ok(SvrModel {
        support_vectors,
        dual_coefs,
        bias: -rho,
        gamma: params.gamma,
        c,
        lambda: params.lambda,
        dim,
        iterations,
    })
}
