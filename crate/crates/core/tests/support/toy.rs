//! Discrete search toy: cells `0..space` on one integrator input, the
//! optimum one cell, and a search box given by centre and half-width.

use bsm_nmpc::ga::sample_population;
use bsm_nmpc::nmpc::MarginVector;
use bsm_nmpc::plant::ModelSpec;
use bsm_nmpc::rng::{stream, Stream};

pub struct Toy {
    pub space: usize,
    pub optimum: usize,
}

impl Toy {
    fn spec(&self) -> ModelSpec {
        let mut s = ModelSpec::integrator(1);
        s.u_min = vec![0.0];
        s.u_max = vec![self.space as f64];
        s
    }

    /// Trials in which one generation of `population` uniform draws from
    /// `center +- half_width` hits the optimum cell.
    pub fn hits(&self, center: f64, half_width: f64, population: usize, trials: usize, seed: u64) -> usize {
        let spec = self.spec();
        let psi = MarginVector(vec![half_width]);
        (0..trials)
            .filter(|&t| {
                let mut rng = stream(seed, Stream::Controller, t as u64);
                sample_population(&[center], &psi, population, &spec, &mut rng)
                    .iter()
                    .any(|g| (g[0].floor() as usize).min(self.space - 1) == self.optimum)
            })
            .count()
    }
}

/// One-sided two-proportion z statistic for `a/n > b/n`.
pub fn z_greater(a: usize, b: usize, n: usize) -> f64 {
    let (pa, pb) = (a as f64 / n as f64, b as f64 / n as f64);
    let pooled = (a + b) as f64 / (2 * n) as f64;
    let se = (2.0 * pooled * (1.0 - pooled) / n as f64).sqrt();
    if se == 0.0 {
        return if pa > pb { f64::INFINITY } else { 0.0 };
    }
    (pa - pb) / se
}
