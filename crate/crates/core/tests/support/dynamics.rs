//! Plant-model property checks shared by the plant tests and the
//! acceptance run. Each returns the worst observed deviation.

use bsm_nmpc::plant::{
    derivatives, perturb_input, perturb_measurement, rk4_step, step, ModelKind, ModelSpec, NoiseConfig, PlantParams,
};
use bsm_nmpc::rng::{stream, Stream};

/// Published quadrotor mass, gravity, and thrust coefficient.
pub const UAV_M: f64 = 0.468;
pub const UAV_G: f64 = 9.81;
pub const UAV_K: f64 = 2.980e-6;

pub fn hover_relative_error() -> f64 {
    let PlantParams::Uav(p) = ModelSpec::uav().params else { unreachable!() };
    let analytic = (UAV_M * UAV_G / (4.0 * UAV_K)).sqrt();
    (p.hover_speed() - analytic).abs() / analytic
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest one-step drift from a state that should be stationary (or, for
/// the vehicle, move exactly along its heading).
pub fn equilibrium_drift() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();

    let uav = ModelSpec::uav();
    let PlantParams::Uav(p) = &uav.params else { unreachable!() };
    let mut x = vec![0.0; 12];
    x[0] = 1.0;
    x[1] = -2.0;
    x[2] = 3.0;
    x[8] = 0.3;
    let next = step(&uav, &x, &[p.hover_input(); 4]).unwrap();
    out.push(("uav hover", max_diff(&next, &x)));

    let sfjr = ModelSpec::sfjr();
    let PlantParams::Sfjr(p) = &sfjr.params else { unreachable!() };
    let mut worst: f64 = 0.0;
    for angle in [0.0, 0.4, 1.2, 1.5707963267948966, 2.5, -0.8] {
        let (x, v) = p.equilibrium(angle);
        let next = step(&sfjr, &x, &[v]).unwrap();
        worst = worst.max(max_diff(&next, &x));
    }
    out.push(("sfjr static hold", worst));

    let car = ModelSpec::vehicle();
    let (vx, yaw) = (10.0, 0.4);
    let x = [5.0, -1.0, vx, 0.0, 0.0, yaw];
    let next = step(&car, &x, &[0.0, 0.0]).unwrap();
    let t = car.ts;
    let expected = [5.0 + vx * yaw.cos() * t, -1.0 + vx * yaw.sin() * t, vx, 0.0, 0.0, yaw];
    out.push(("vehicle coasting", max_diff(&next, &expected)));

    let int = ModelSpec::integrator(3);
    let x = [1.0, -2.0, 0.5];
    out.push(("integrator at rest", max_diff(&step(&int, &x, &[0.0; 3]).unwrap(), &x)));
    out
}

fn integrate(spec: &ModelSpec, x0: &[f64], u: &[f64], horizon: f64, steps: usize) -> Vec<f64> {
    let dt = horizon / steps as f64;
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let mut next = vec![0.0; x.len()];
        rk4_step(&x, dt, &mut next, |s, d| {
            d.copy_from_slice(&derivatives(spec, s, u)?);
            Ok(())
        })
        .unwrap();
        x = next;
    }
    x
}

/// Self-convergence ratio `|x_N - x_2N| / |x_2N - x_4N|`, which is 16 for
/// a fourth-order method.
pub fn convergence_ratios() -> Vec<(&'static str, f64)> {
    let uav = ModelSpec::uav();
    let PlantParams::Uav(p) = &uav.params else { unreachable!() };
    let h = p.hover_input();
    let mut xu = vec![0.0; 12];
    xu[3] = 0.5;
    xu[6] = 0.1;
    xu[7] = -0.05;
    xu[9] = 0.2;
    let cases: Vec<(&str, ModelSpec, Vec<f64>, Vec<f64>, f64, usize)> = vec![
        ("uav", uav.clone(), xu, vec![h * 1.02, h * 0.99, h * 1.01, h * 0.97], 1.0, 10),
        ("vehicle", ModelSpec::vehicle(), vec![0.0, 0.0, 8.0, 0.3, 0.2, 0.1], vec![1.0, 0.1], 1.0, 80),
    ];
    let mut out: Vec<(&str, f64)> = cases
        .into_iter()
        .map(|(name, spec, x0, u, t, n)| {
            let a = integrate(&spec, &x0, &u, t, n);
            let b = integrate(&spec, &x0, &u, t, 2 * n);
            let c = integrate(&spec, &x0, &u, t, 4 * n);
            (name, max_diff(&a, &b) / max_diff(&b, &c))
        })
        .collect();
    // The joint robot integrates its mechanical part with the current on
    // its quasi-steady manifold; refine the substep count instead.
    let PlantParams::Sfjr(p) = ModelSpec::sfjr().params else { unreachable!() };
    let x0 = [0.5, 0.1, 0.52, 0.0, 0.0];
    let run = |n: usize| {
        let mut out = [0.0; 5];
        p.advance(&x0, 6.0, 0.2, n, &mut out).unwrap();
        out
    };
    let (a, b, c) = (run(40), run(80), run(160));
    out.push(("sfjr", max_diff(&a, &b) / max_diff(&b, &c)));
    out
}

/// Worst relative error of sample mean (in standard deviations) and sample
/// standard deviation of the injected input and measurement noise.
pub fn noise_moment_errors(draws: usize) -> (f64, f64) {
    let spec = ModelSpec::for_kind(ModelKind::Sfjr);
    let PlantParams::Sfjr(p) = &spec.params else { unreachable!() };
    let (x, v) = p.equilibrium(1.0);
    let noise = NoiseConfig::new(0.01, 0.005, 0).unwrap();
    let mut rng = stream(17, Stream::Plant, 0);
    let mut mean_err: f64 = 0.0;
    let mut sd_err: f64 = 0.0;
    let mut check = |samples: &[Vec<f64>], center: &[f64], sigmas: &[f64]| {
        for j in 0..center.len() {
            if sigmas[j] == 0.0 {
                continue;
            }
            let n = samples.len() as f64;
            let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            mean_err = mean_err.max((mean - center[j]).abs() / (sigmas[j] / n.sqrt()));
            sd_err = sd_err.max((var.sqrt() / sigmas[j] - 1.0).abs());
        }
    };
    let meas: Vec<Vec<f64>> = (0..draws).map(|_| perturb_measurement(&x, &spec, &noise, &mut rng).unwrap().0).collect();
    check(&meas, &x, &noise.measurement_sigmas(&spec));
    let inputs: Vec<Vec<f64>> = (0..draws).map(|_| perturb_input(&[v + 10.0], &spec, &noise, &mut rng).unwrap().0).collect();
    check(&inputs, &[v + 10.0], &noise.input_sigmas(&spec));
    (mean_err, sd_err)
}
