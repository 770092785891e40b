//! Helpers shared by the integration tests.
#![allow(dead_code)]

use viscous_shock::diffusion_waves::DiffusionWave;
use viscous_shock::mesh::{cubic_sample, Mesh};

/// Fourth-order differences, RK4, regridding each time the width doubles.
pub fn brute_force(
    beta: f64,
    gamma: f64,
    mass: f64,
    tau0: f64,
    sigma0: f64,
    tau_end: f64,
) -> (Mesh, Vec<f64>) {
    let width = |tau: f64| (sigma0 * sigma0 + 2.0 * beta * (tau - tau0)).sqrt();
    let mut tau = tau0;
    let mut mesh = Mesh::symmetric(15.0 * sigma0, 3).unwrap();
    let mut u = vec![0.0; 3];
    let mut first = true;
    while tau < tau_end - 1e-14 {
        let s = width(tau);
        let target = (tau0 + ((2.0 * s).powi(2) - sigma0 * sigma0) / (2.0 * beta)).min(tau_end);
        let send = width(target);
        let h = s / 20.0;
        let half = 15.0 * send + 2.0 * gamma.abs() * mass.abs() / beta.sqrt() + 1.0;
        let next = Mesh::with_spacing(-half, half, h).unwrap();
        u = if first {
            first = false;
            next.points()
                .map(|x| {
                    mass * (-x * x / (2.0 * sigma0 * sigma0)).exp()
                        / (2.0 * std::f64::consts::PI).sqrt()
                        / sigma0
                })
                .collect()
        } else {
            next.points()
                .map(|x| cubic_sample(&mesh, &u, x).unwrap_or(0.0))
                .collect()
        };
        mesh = next;
        let h = mesh.spacing();
        let steps = ((target - tau) / (0.2 * h * h / beta)).ceil() as usize;
        let dt = (target - tau) / steps as f64;
        let rhs = |v: &[f64], out: &mut [f64]| {
            let n = v.len();
            out.iter_mut().for_each(|o| *o = 0.0);
            for i in 2..n - 2 {
                let lap = (-v[i + 2] + 16.0 * v[i + 1] - 30.0 * v[i] + 16.0 * v[i - 1] - v[i - 2])
                    / (12.0 * h * h);
                let q = |k: usize| v[k] * v[k];
                let dq = (-q(i + 2) + 8.0 * q(i + 1) - 8.0 * q(i - 1) + q(i - 2)) / (12.0 * h);
                out[i] = beta * lap - gamma * dq;
            }
        };
        let n = u.len();
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        );
        for _ in 0..steps {
            rhs(&u, &mut k1);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k1[i];
            }
            rhs(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k2[i];
            }
            rhs(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = u[i] + dt * k3[i];
            }
            rhs(&tmp, &mut k4);
            for i in 0..n {
                u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        tau = target;
    }
    (mesh, u)
}

/// Relative `L∞` error at `t = 10` of the closed form against the brute
/// force started from a Gaussian of std 0.01 at `tau0`.
pub fn relative_error_from(beta: f64, gamma: f64, mass: f64, tau0: f64) -> f64 {
    let t = 10.0;
    let (mesh, u) = brute_force(beta, gamma, mass, tau0, 0.01, t + 1.0);
    let w = DiffusionWave::scalar(mass, 0.0, beta, gamma);
    let mut err: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for (i, x) in mesh.points().enumerate() {
        let exact = w.eval(x, t).unwrap();
        err = err.max((u[i] - exact).abs());
        peak = peak.max(exact.abs());
    }
    err / peak
}

/// As [`relative_error_from`], with the Gaussian started at `τ₀ = σ₀²/2β`,
/// the time at which a point source has spread to std `σ₀`.
pub fn relative_error(beta: f64, gamma: f64, mass: f64) -> f64 {
    relative_error_from(beta, gamma, mass, 1e-4 / (2.0 * beta))
}
