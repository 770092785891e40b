//! Exact steady states of the centered scheme.
//!
//! A stationary grid function of the centered conservative scheme satisfies
//! `½(G(u_i) + G(u_{i+1})) − B (u_{i+1} − u_i)/h = G(u₋)` for every cell.
//! Near `u₋` the linearized recursion has a single growing multiplier `ρ`
//! with direction `r_h`; the family is
//!
//! ```text
//! u_i(δ) = u₋ + a_i r_h + a_i² q,   a_i = ε ρ^{(x_i + δ − x_s)/h}
//! ```
//!
//! while `a_i ≤ ε`,
//!
//! then continued by a Newton march across the layer. `x_s` is chosen so that
//! `δ = 0` carries the same mass as the continuous profile.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodeField};
use crate::profile::ShockProfile;
use crate::systems::SystemModel;

const START_AMPLITUDE: f64 = 1e-6;

/// The discrete profile family `δ ↦ u_h(δ)` on a fixed mesh.
#[derive(Debug, Clone)]
pub struct DiscreteProfile {
    pub model: SystemModel,
    pub mesh: Mesh,
    pub rho: f64,
    pub direction: DVector<f64>,
    /// Second-order coefficient of the small-amplitude expansion.
    pub second_order: DVector<f64>,
    pub x_s: f64,
    scale: f64,
}

impl DiscreteProfile {
    /// Builds the family on `mesh` with `x_s` calibrated against `profile`.
    pub fn new(model: &SystemModel, mesh: Mesh, profile: &ShockProfile) -> Result<Self> {
        let h = mesh.spacing();
        let n = model.dim();
        let b = model.law.viscosity(model.u_minus.as_slice()) / h;
        let j = model.frame_jacobian(model.u_minus.as_slice()) * 0.5;
        let lhs = (&b - &j).try_inverse().ok_or(Error::DegenerateBasis(0.0))?;
        let m = lhs * (&b + &j);
        let eig = m.clone().complex_eigenvalues();
        let growing: Vec<f64> = eig
            .iter()
            .filter(|z| z.re > 1.0 + 1e-12)
            .map(|z| z.re)
            .collect();
        if growing.len() != 1 || eig.iter().any(|z| z.im.abs() > 1e-12) {
            return Err(Error::NoConnection(format!(
                "discrete recursion at u- has {} growing multipliers",
                growing.len()
            )));
        }
        let rho = growing[0];
        let svd = (m - DMatrix::identity(n, n) * rho).svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let mut direction: DVector<f64> = v_t.row(imin).transpose();
        let jump = &model.u_plus - &model.u_minus;
        if direction.dot(&jump) < 0.0 {
            direction = -direction;
        }
        let scale = jump.amax();
        // order a²: [½(1+ρ²)J − (ρ²−1)B/h] q = −¼(1+ρ²) d²G(r, r)
        let r2 = rho * rho;
        let hrr = model.law.hessian(
            model.u_minus.as_slice(),
            direction.as_slice(),
            direction.as_slice(),
        );
        let second_order = (&j * (1.0 + r2) - &b * (r2 - 1.0))
            .lu()
            .solve(&(hrr * (-0.25 * (1.0 + r2))))
            .ok_or(Error::DegenerateBasis(0.0))?;
        let mut fam = Self {
            model: model.clone(),
            mesh,
            rho,
            direction,
            second_order,
            x_s: 0.0,
            scale,
        };

        // mass of u_h(0) − ū along the jump, as a function of x_s
        let reference = NodeField::from_fn(n, mesh.nodes, |i, out| {
            let mut slope = vec![0.0; n];
            profile.eval(mesh.x(i), out, &mut slope);
        });
        let jj = jump.dot(&jump);
        let defect = |fam: &Self| -> Result<f64> {
            let (u, _) = fam.sample(0.0)?;
            let mass = u.sub(&reference).integral(h);
            Ok(mass
                .iter()
                .zip(jump.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / jj)
        };
        // mass changes by about −δ per unit shift along the jump; secant from
        // that estimate, stopped at the rounding level of the march
        let tol = 1e-10 * (1.0 + mesh.x_max - mesh.x_min);
        let mut x0 = fam.initial_guess(model, profile);
        fam.x_s = x0;
        let mut f0 = defect(&fam)?;
        let mut best = (x0, f0);
        let mut x1 = x0 + f0;
        for _ in 0..30 {
            if best.1.abs() < tol {
                break;
            }
            fam.x_s = x1;
            let f1 = defect(&fam)?;
            if f1.abs() < best.1.abs() {
                best = (x1, f1);
            }
            let slope = if f1 != f0 {
                (f1 - f0) / (x1 - x0)
            } else {
                -1.0
            };
            (x0, f0) = (x1, f1);
            x1 -= f1 / slope;
        }
        if best.1.abs() >= tol {
            return Err(Error::NoConvergence {
                iterations: 30,
                residual: best.1,
            });
        }
        fam.x_s = best.0;
        Ok(fam)
    }

    /// Where the continuous profile leaves `u₋` by the start amplitude.
    fn initial_guess(&self, model: &SystemModel, profile: &ShockProfile) -> f64 {
        let n = model.dim();
        let target = START_AMPLITUDE * self.scale;
        let mut slope = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mesh = profile.mesh;
        for x in mesh.points() {
            profile.eval(x, &mut u, &mut slope);
            let d: f64 = u
                .iter()
                .zip(model.u_minus.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if d >= target {
                return x;
            }
        }
        mesh.x_min
    }

    /// `u_h(δ)` and `∂_δ u_h(δ)` on the mesh.
    pub fn sample(&self, delta: f64) -> Result<(NodeField, NodeField)> {
        let model = &self.model;
        let mesh = self.mesh;
        let h = mesh.spacing();
        let n = model.dim();
        let eps = START_AMPLITUDE * self.scale;
        let log_rho = self.rho.ln();
        let amp = |x: f64| eps * ((x + delta - self.x_s) / h * log_rho).exp();
        let mut u = NodeField::zeros(n, mesh.nodes);
        let mut du = NodeField::zeros(n, mesh.nodes);
        let start = (0..mesh.nodes)
            .find(|&i| amp(mesh.x(i)) >= eps)
            .unwrap_or(mesh.nodes - 1);
        let start = start.min(mesh.nodes - 1);
        if start == 0 && amp(mesh.x(0)) > 10.0 * eps {
            return Err(Error::DomainTooSmall {
                halfwidth: 0.5 * (mesh.x_max - mesh.x_min),
                mismatch: amp(mesh.x(0)),
                tolerance: eps,
            });
        }
        for i in 0..=start {
            let a = amp(mesh.x(i));
            for c in 0..n {
                let (r, q) = (self.direction[c], self.second_order[c]);
                u.node_mut(i)[c] = model.u_minus[c] + a * r + a * a * q;
                du.node_mut(i)[c] = a * log_rho / h * (r + 2.0 * a * q);
            }
        }
        let binv = model.law.viscosity(model.u_minus.as_slice()) / h;
        let mut g_minus = vec![0.0; n];
        model.frame_flux(model.u_minus.as_slice(), &mut g_minus);
        let mut gi = vec![0.0; n];
        let mut gn = vec![0.0; n];
        for i in start..mesh.nodes - 1 {
            let ui = DVector::from_column_slice(u.node(i));
            model.frame_flux(ui.as_slice(), &mut gi);
            // ½G(w) − B w/h = rhs
            let rhs = DVector::from_column_slice(&g_minus)
                - DVector::from_column_slice(&gi) * 0.5
                - &binv * &ui;
            let mut w = ui.clone();
            let mut converged = false;
            for _ in 0..50 {
                model.frame_flux(w.as_slice(), &mut gn);
                let res = DVector::from_column_slice(&gn) * 0.5 - &binv * &w - &rhs;
                let jac = model.frame_jacobian(w.as_slice()) * 0.5 - &binv;
                let step = jac.lu().solve(&res).ok_or(Error::DegenerateBasis(0.0))?;
                w -= &step;
                if step.amax() <= 1e-15 * (1.0 + w.amax()) {
                    converged = true;
                    break;
                }
            }
            if !converged || !w.iter().all(|x| x.is_finite()) {
                return Err(Error::NoConvergence {
                    iterations: 50,
                    residual: f64::NAN,
                });
            }
            u.node_mut(i + 1).copy_from_slice(w.as_slice());
            // tangent: (½J(u_{i+1}) − B/h) v_{i+1} = −(½J(u_i) + B/h) v_i
            let vi = DVector::from_column_slice(du.node(i));
            let right = -(model.frame_jacobian(ui.as_slice()) * 0.5 + &binv) * vi;
            let jac = model.frame_jacobian(w.as_slice()) * 0.5 - &binv;
            let v = jac.lu().solve(&right).ok_or(Error::DegenerateBasis(0.0))?;
            du.node_mut(i + 1).copy_from_slice(v.as_slice());
        }
        Ok((u, du))
    }

    /// Residual of the steady cell relation, max over cells.
    pub fn cell_residual(&self, u: &NodeField) -> f64 {
        let model = &self.model;
        let h = self.mesh.spacing();
        let n = model.dim();
        let b = model.law.viscosity(model.u_minus.as_slice());
        let mut g_minus = vec![0.0; n];
        model.frame_flux(model.u_minus.as_slice(), &mut g_minus);
        let (mut g0, mut g1) = (vec![0.0; n], vec![0.0; n]);
        let mut worst: f64 = 0.0;
        for i in 0..self.mesh.nodes - 1 {
            model.frame_flux(u.node(i), &mut g0);
            model.frame_flux(u.node(i + 1), &mut g1);
            for r in 0..n {
                let visc: f64 = (0..n)
                    .map(|c| b[(r, c)] * (u.node(i + 1)[c] - u.node(i)[c]))
                    .sum::<f64>()
                    / h;
                worst = worst.max((0.5 * (g0[r] + g1[r]) - visc - g_minus[r]).abs());
            }
        }
        worst
    }
}
