//! Dense interior-point solver for the epsilon-SVR dual, used as a reference
//! for the SMO trainer.

use nalgebra::{DMatrix, DVector};

pub struct DualSolution {
    /// `a+ - a-` per training point.
    pub coefs: Vec<f64>,
    pub bias: f64,
}

fn gauss(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (-d / gamma).exp()
}

pub fn predict(sol: &DualSolution, xs: &[Vec<f64>], gamma: f64, x: &[f64]) -> f64 {
    xs.iter().zip(&sol.coefs).map(|(xi, b)| b * gauss(xi, x, gamma)).sum::<f64>() + sol.bias
}

/// Primal-dual path following on
/// `min 1/2 a'Ha + c'a  s.t.  [1 -1]'a = 0, 0 <= a <= C` with `a = [a+, a-]`.
pub fn solve(xs: &[Vec<f64>], ys: &[f64], c: f64, lambda: f64, gamma: f64) -> DualSolution {
    let l = xs.len();
    let n = 2 * l;
    let k = DMatrix::from_fn(l, l, |i, j| gauss(&xs[i], &xs[j], gamma));
    let mut h = DMatrix::zeros(n, n);
    h.view_mut((0, 0), (l, l)).copy_from(&k);
    h.view_mut((l, l), (l, l)).copy_from(&k);
    h.view_mut((0, l), (l, l)).copy_from(&(-&k));
    h.view_mut((l, 0), (l, l)).copy_from(&(-&k));
    let lin = DVector::from_fn(n, |i, _| if i < l { lambda - ys[i] } else { lambda + ys[i - l] });
    let sgn = DVector::from_fn(n, |i, _| if i < l { 1.0 } else { -1.0 });

    let mut a = DVector::from_element(n, c / 2.0);
    let mut z = DVector::from_element(n, 1.0);
    let mut w = DVector::from_element(n, 1.0);
    let mut nu = 0.0;
    for _ in 0..500 {
        let s = a.map(|v| c - v);
        let rd = &h * &a + &lin - &z + &w + &sgn * nu;
        let rp = sgn.dot(&a);
        let gap = a.dot(&z) + s.dot(&w);
        if gap < 1e-14 * n as f64 && rd.amax() < 1e-12 && rp.abs() < 1e-12 {
            break;
        }
        let mu = 0.1 * gap / (2 * n) as f64;
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&h);
        for i in 0..n {
            m[(i, i)] += z[i] / a[i] + w[i] / s[i];
            m[(i, n)] = sgn[i];
            m[(n, i)] = sgn[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -rd[i] + (mu - a[i] * z[i]) / a[i] - (mu - s[i] * w[i]) / s[i];
        }
        rhs[n] = -rp;
        let step = m.lu().solve(&rhs).expect("KKT system is nonsingular");
        let da = step.rows(0, n).into_owned();
        let dnu = step[n];
        let dz = DVector::from_fn(n, |i, _| (mu - a[i] * z[i] - z[i] * da[i]) / a[i]);
        let dw = DVector::from_fn(n, |i, _| (mu - s[i] * w[i] + w[i] * da[i]) / s[i]);
        let mut alpha: f64 = 1.0;
        for i in 0..n {
            if da[i] < 0.0 {
                alpha = alpha.min(-a[i] / da[i]);
            }
            if da[i] > 0.0 {
                alpha = alpha.min(s[i] / da[i]);
            }
            if dz[i] < 0.0 {
                alpha = alpha.min(-z[i] / dz[i]);
            }
            if dw[i] < 0.0 {
                alpha = alpha.min(-w[i] / dw[i]);
            }
        }
        let alpha = (0.99 * alpha).min(1.0);
        a += &da * alpha;
        z += &dz * alpha;
        w += &dw * alpha;
        nu += dnu * alpha;
    }

    let coefs: Vec<f64> = (0..l).map(|i| a[i] - a[i + l]).collect();
    let g = &k * DVector::from_column_slice(&coefs);
    let tol = 1e-7 * c;
    let free = (0..n).any(|i| a[i] > tol && a[i] < c - tol);
    let bias = if free {
        nu
    } else {
        // No free multiplier: midpoint of the interval the KKT conditions allow.
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..l {
            let up = ys[i] - lambda - g[i];
            let down = ys[i] + lambda - g[i];
            if a[i] < tol {
                lo = lo.max(up);
            } else {
                hi = hi.min(up);
            }
            if a[i + l] < tol {
                hi = hi.min(down);
            } else {
                lo = lo.max(down);
            }
        }
        0.5 * (lo + hi)
    };
    DualSolution { coefs, bias }
}

/// A small random regression problem with hyper-parameters scaled to it.
pub struct Case {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub c: f64,
    pub lambda: f64,
    pub gamma: f64,
}

pub fn random_case(seed: u64) -> Case {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let l = rng.random_range(8..=50);
    let dim = rng.random_range(1..=4);
    let xs: Vec<Vec<f64>> = (0..l).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys = xs
        .iter()
        .map(|x| x.iter().map(|v| (2.0 * v).sin()).sum::<f64>() + rng.random_range(-0.2..0.2))
        .collect();
    Case {
        xs,
        ys,
        c: [0.3, 1.0, 10.0][rng.random_range(0..3)],
        lambda: rng.random_range(0.01..0.3),
        gamma: rng.random_range(0.2..4.0),
    }
}

/// Test points spread over the training box.
pub fn probes(case: &Case, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = case.xs[0].len();
    let mut out: Vec<Vec<f64>> = case.xs.clone();
    out.extend((0..count).map(|_| (0..dim).map(|_| rng.random_range(-1.2..1.2)).collect::<Vec<f64>>()));
    out
}
