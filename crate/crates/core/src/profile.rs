//! Standing viscous shock profiles.
//!
//! The profile solves `B(ū) ū′ = G(ū) − G(u₋)` with `G(u) = F(u) − s u`, is
//! centered so its first component crosses the midpoint of its endstate
//! values at `x = 0`, and is sampled on a uniform mesh over `[−X, X]`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{hermite, Mesh, NodeField};
use crate::systems::SystemModel;

/// Tail mismatch accepted at `±X`.
pub const TAIL_TOLERANCE: f64 = 1e-8;
/// Distance from the rest point at which shooting starts.
const SHOOT_EPSILON: f64 = 1e-6;
/// Largest RK4 substep used while shooting.
const MAX_SUBSTEP: f64 = 2.5e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShockProfile {
    pub mesh: Mesh,
    pub values: NodeField,
    pub derivative: NodeField,
    pub second_derivative: NodeField,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    /// Fitted exponential approach rate to the endstates.
    pub decay_rate: f64,
}

/// Right-hand side of the profile ODE, `ū′ = B(ū)⁻¹ (G(ū) − G(u₋))`.
struct ProfileOde<'a> {
    model: &'a SystemModel,
    g_minus: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> ProfileOde<'a> {
    fn new(model: &'a SystemModel) -> Self {
        let n = model.dim();
        let mut g_minus = vec![0.0; n];
        model.frame_flux(model.u_minus.as_slice(), &mut g_minus);
        Self {
            model,
            g_minus,
            scratch: vec![0.0; n],
        }
    }

    fn rhs(&mut self, u: &[f64]) -> DVector<f64> {
        self.model.frame_flux(u, &mut self.scratch);
        let f = DVector::from_iterator(
            u.len(),
            self.scratch.iter().zip(&self.g_minus).map(|(a, b)| a - b),
        );
        solve_viscosity(&self.model.law.viscosity(u), f)
    }

    /// `ū″ = B⁻¹ dG(ū) ū′`, with `B` frozen at the node.
    fn second(&self, u: &[f64], du: &DVector<f64>) -> DVector<f64> {
        solve_viscosity(
            &self.model.law.viscosity(u),
            self.model.frame_jacobian(u) * du,
        )
    }

    fn rk4(&mut self, u: &DVector<f64>, h: f64) -> DVector<f64> {
        let k1 = self.rhs(u.as_slice());
        let k2 = self.rhs((u + &k1 * (0.5 * h)).as_slice());
        let k3 = self.rhs((u + &k2 * (0.5 * h)).as_slice());
        let k4 = self.rhs((u + &k3 * h).as_slice());
        u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }
}

fn solve_viscosity(b: &DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
    if b.nrows() == 1 {
        return rhs / b[(0, 0)];
    }
    b.clone()
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| DVector::from_element(rhs.len(), f64::NAN))
}

/// Unstable eigenpair `(μ, d)` of the linearized profile ODE at `u₋`.
fn unstable_direction(model: &SystemModel) -> Result<(f64, DVector<f64>)> {
    let u = model.u_minus.as_slice();
    let b = model.law.viscosity(u);
    let binv = b
        .try_inverse()
        .ok_or_else(|| Error::NoConnection("viscosity matrix is singular at u-".into()))?;
    let j = &binv * model.frame_jacobian(u);
    let n = j.nrows();
    let eig = j.clone().complex_eigenvalues();
    let unstable: Vec<_> = eig.iter().filter(|z| z.re > 0.0).collect();
    if unstable.len() != 1 || unstable[0].im.abs() > 1e-10 * (1.0 + unstable[0].re) {
        return Err(Error::NoConnection(format!(
            "expected one real unstable direction at u-, found eigenvalues {:?}",
            eig.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>()
        )));
    }
    let mu = unstable[0].re;
    let svd = (j - DMatrix::identity(n, n) * mu).svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let d: DVector<f64> = v_t.row(imin).transpose();
    Ok((mu, d.normalize()))
}

/// Integrates from `u` at 0 until the first component crosses `mid`;
/// returns the crossing position or `None` if it never does within `span`.
fn shoot_to_midpoint(
    ode: &mut ProfileOde,
    u0: &DVector<f64>,
    mid: f64,
    hs: f64,
    span: f64,
    scale: f64,
) -> Option<f64> {
    let side = (u0[0] - mid).signum();
    let mut u = u0.clone();
    let mut x = 0.0;
    while x < span {
        let next = ode.rk4(&u, hs);
        if !next.iter().all(|c| c.is_finite()) || next.amax() > 1e6 * scale {
            return None;
        }
        if (next[0] - mid).signum() != side {
            let (mut lo, mut hi) = (0.0, hs);
            for _ in 0..80 {
                let m = 0.5 * (lo + hi);
                if (ode.rk4(&u, m)[0] - mid).signum() == side {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            return Some(x + 0.5 * (lo + hi));
        }
        u = next;
        x += hs;
    }
    None
}

/// Integrates `u` from `x0` to `x1` with equal RK4 steps no longer than `hs`.
fn advance(ode: &mut ProfileOde, u: &DVector<f64>, x0: f64, x1: f64, hs: f64) -> DVector<f64> {
    let steps = ((x1 - x0) / hs).ceil().max(1.0) as usize;
    let h = (x1 - x0) / steps as f64;
    let mut v = u.clone();
    for _ in 0..steps {
        v = ode.rk4(&v, h);
    }
    v
}

/// Computes the standing profile of `model` on `[−X, X]` with `nodes` points.
///
/// ```
/// use viscous_shock::{profile::solve_profile, systems::make_burgers};
/// let p = solve_profile(&make_burgers(), 40.0, 8001).unwrap();
/// let i = p.mesh.nodes / 2 + 100; // x = 1
/// assert!((p.values.node(i)[0] + (0.5f64).tanh()).abs() < 1e-8);
/// ```
pub fn solve_profile(model: &SystemModel, halfwidth: f64, nodes: usize) -> Result<ShockProfile> {
    if !model.is_lax() {
        return Err(Error::NoConnection("the shock is not of Lax type".into()));
    }
    let mesh = Mesh::symmetric(halfwidth, nodes)?;
    let n = model.dim();
    let h = mesh.spacing();
    let substeps = (h / MAX_SUBSTEP).ceil().max(1.0) as usize;
    let hs = h / substeps as f64;
    let jump = &model.u_plus - &model.u_minus;
    let scale = jump.amax().max(model.u_minus.amax()).max(1.0);
    let mid = 0.5 * (model.u_minus[0] + model.u_plus[0]);
    if jump[0].abs() < 1e-12 * scale {
        return Err(Error::NoConnection(
            "first component does not change across the shock".into(),
        ));
    }

    let (mu, d) = unstable_direction(model)?;
    let mut ode = ProfileOde::new(model);
    let span = 4.0 * halfwidth + 50.0 / mu;

    // one branch of the unstable manifold leaves toward u₊
    let mut found = None;
    for sign in [1.0, -1.0] {
        let dir = &d * sign;
        let start = &model.u_minus + &dir * (SHOOT_EPSILON * scale);
        if let Some(xc) = shoot_to_midpoint(&mut ode, &start, mid, hs, span, scale) {
            let far = advance(&mut ode, &start, 0.0, xc + 2.0 * halfwidth, hs);
            if (&far - &model.u_plus).amax() < 1e-3 * scale {
                found = Some((dir, start, xc));
                break;
            }
        }
    }
    let (dir, start, xc) = found.ok_or_else(|| {
        Error::NoConnection("neither branch of the unstable manifold reaches u+".into())
    })?;
    let xs = -xc;

    let mut values = NodeField::zeros(n, nodes);
    let mut first_integrated = nodes;
    for i in 0..nodes {
        let x = mesh.x(i);
        if x > xs {
            first_integrated = i;
            break;
        }
        let amp = SHOOT_EPSILON * scale * (mu * (x - xs)).exp();
        for c in 0..n {
            values.node_mut(i)[c] = model.u_minus[c] + amp * dir[c];
        }
    }
    if first_integrated < nodes {
        let mut u = advance(&mut ode, &start, xs, mesh.x(first_integrated), hs);
        values
            .node_mut(first_integrated)
            .copy_from_slice(u.as_slice());
        for i in first_integrated + 1..nodes {
            for _ in 0..substeps {
                u = ode.rk4(&u, hs);
            }
            if !u.iter().all(|c| c.is_finite()) {
                return Err(Error::NoConnection(format!(
                    "trajectory diverged at x = {}",
                    mesh.x(i)
                )));
            }
            values.node_mut(i).copy_from_slice(u.as_slice());
        }
    }

    let mut derivative = NodeField::zeros(n, nodes);
    let mut second = NodeField::zeros(n, nodes);
    for i in 0..nodes {
        let du = ode.rhs(values.node(i));
        let d2 = ode.second(values.node(i), &du);
        derivative.node_mut(i).copy_from_slice(du.as_slice());
        second.node_mut(i).copy_from_slice(d2.as_slice());
    }

    let left = dist(values.node(0), model.u_minus.as_slice());
    let right = dist(values.node(nodes - 1), model.u_plus.as_slice());
    let mismatch = left.max(right);
    if mismatch > TAIL_TOLERANCE * scale {
        return Err(Error::DomainTooSmall {
            halfwidth,
            mismatch,
            tolerance: TAIL_TOLERANCE * scale,
        });
    }

    let mut profile = ShockProfile {
        mesh,
        values,
        derivative,
        second_derivative: second,
        u_minus: model.u_minus.as_slice().to_vec(),
        u_plus: model.u_plus.as_slice().to_vec(),
        decay_rate: f64::NAN,
    };
    profile.decay_rate = fit_decay_rate(&profile)?;
    Ok(profile)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Least-squares slope of `log|ū − u_±|` against `|x|` on the outer quarter
/// of the mesh at each side; the slower side wins.
///
/// Samples within `1e−13` (relative) of the endstate are discarded as noise.
pub fn fit_decay_rate(profile: &ShockProfile) -> Result<f64> {
    let mesh = &profile.mesh;
    let half = 0.5 * (mesh.x_max - mesh.x_min);
    let center = 0.5 * (mesh.x_max + mesh.x_min);
    let scale = dist(&profile.u_plus, &profile.u_minus).max(1.0);
    let floor = 1e-13 * scale;
    let mut rates = Vec::new();
    for (state, outer) in [(&profile.u_minus, -1.0), (&profile.u_plus, 1.0)] {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for i in 0..mesh.nodes {
            let x = mesh.x(i) - center;
            if outer * x < 0.5 * half {
                continue;
            }
            let e = dist(profile.values.node(i), state);
            if e > floor {
                xs.push(x.abs());
                ys.push(e.ln());
            }
        }
        if xs.len() >= 8 {
            let (slope, _) = least_squares_line(&xs, &ys);
            rates.push(-slope);
        }
    }
    let rate = rates.into_iter().fold(f64::INFINITY, f64::min);
    if !rate.is_finite() || rate <= 0.0 {
        return Err(Error::TailAtNoiseFloor);
    }
    Ok(rate)
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

impl ShockProfile {
    /// Wraps externally computed samples; the second derivative is obtained
    /// by central differences of `derivative` and the decay rate is fitted.
    pub fn from_samples(
        mesh: Mesh,
        values: NodeField,
        derivative: NodeField,
        u_minus: Vec<f64>,
        u_plus: Vec<f64>,
    ) -> Result<Self> {
        if values.nodes() != mesh.nodes || derivative.nodes() != mesh.nodes {
            return Err(Error::MeshMismatch(
                "sample count differs from mesh size".into(),
            ));
        }
        let n = values.dim;
        let h = mesh.spacing();
        let second = NodeField::from_fn(n, mesh.nodes, |i, out| {
            let (a, b, w) = match i {
                0 => (0, 1, h),
                i if i == mesh.nodes - 1 => (i - 1, i, h),
                i => (i - 1, i + 1, 2.0 * h),
            };
            for c in 0..n {
                out[c] = (derivative.node(b)[c] - derivative.node(a)[c]) / w;
            }
        });
        let mut p = ShockProfile {
            mesh,
            values,
            derivative,
            second_derivative: second,
            u_minus,
            u_plus,
            decay_rate: f64::NAN,
        };
        p.decay_rate = fit_decay_rate(&p)?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.values.dim
    }

    pub fn halfwidth(&self) -> f64 {
        0.5 * (self.mesh.x_max - self.mesh.x_min)
    }

    /// `ū(x)` and `ū′(x)` by Hermite interpolation; endstates (and zero
    /// slope) outside the mesh.
    pub fn eval(&self, x: f64, value: &mut [f64], slope: &mut [f64]) {
        let n = self.dim();
        match self.mesh.locate(x) {
            Some((i, t)) => {
                let h = self.mesh.spacing();
                let (v0, v1) = (self.values.node(i), self.values.node(i + 1));
                let (d0, d1) = (self.derivative.node(i), self.derivative.node(i + 1));
                let (s0, s1) = (
                    self.second_derivative.node(i),
                    self.second_derivative.node(i + 1),
                );
                for c in 0..n {
                    value[c] = hermite(v0[c], v1[c], d0[c], d1[c], t, h);
                    slope[c] = hermite(d0[c], d1[c], s0[c], s1[c], t, h);
                }
            }
            None => {
                let end = if x < self.mesh.x_min {
                    &self.u_minus
                } else {
                    &self.u_plus
                };
                value.copy_from_slice(end);
                slope.iter_mut().for_each(|s| *s = 0.0);
            }
        }
    }

    fn check_shift(&self, delta: f64) -> Result<()> {
        let limit = self.halfwidth() / 10.0;
        if !(delta.abs() < limit) {
            return Err(Error::ShiftOutOfRange { delta, limit });
        }
        Ok(())
    }

    /// Samples `ū^δ(x) = ū(x + δ)` and `∂_δ ū^δ = ū′(x + δ)` on `mesh`.
    pub fn sample_shifted(&self, mesh: &Mesh, delta: f64) -> Result<(NodeField, NodeField)> {
        self.check_shift(delta)?;
        if delta == 0.0 && mesh.same_as(&self.mesh) {
            return Ok((self.values.clone(), self.derivative.clone()));
        }
        let n = self.dim();
        let mut values = NodeField::zeros(n, mesh.nodes);
        let mut slopes = NodeField::zeros(n, mesh.nodes);
        for (i, (v, s)) in values
            .data
            .chunks_mut(n)
            .zip(slopes.data.chunks_mut(n))
            .enumerate()
        {
            self.eval(mesh.x(i) + delta, v, s);
        }
        Ok((values, slopes))
    }

    /// Residual of the profile ODE in integrated form, per unit length:
    /// `[ū_{i+1} − ū_i − h/2 (ū′_i + ū′_{i+1}) + h²/12 (ū″_{i+1} − ū″_i)] / h`,
    /// with `ū′`, `ū″` taken from the ODE right-hand side at the samples.
    pub fn ode_residual(&self, model: &SystemModel) -> f64 {
        let mut ode = ProfileOde::new(model);
        let h = self.mesh.spacing();
        let mut prev_u = self.values.node(0);
        let mut prev_d = ode.rhs(prev_u);
        let mut prev_s = ode.second(prev_u, &prev_d);
        let mut worst: f64 = 0.0;
        for i in 1..self.mesh.nodes {
            let u = self.values.node(i);
            let d = ode.rhs(u);
            let s = ode.second(u, &d);
            for c in 0..self.dim() {
                let r = u[c] - prev_u[c] - 0.5 * h * (prev_d[c] + d[c])
                    + h * h / 12.0 * (s[c] - prev_s[c]);
                worst = worst.max((r / h).abs());
            }
            prev_u = u;
            prev_d = d;
            prev_s = s;
        }
        worst
    }

    /// `sup_x |A(x) − A^±| e^{η|x|}` with `A(x) = dF(ū(x)) − sI`, the
    /// endstate taken by the side of `x`.
    pub fn frozen_coefficient_defect(&self, model: &SystemModel, eta: f64) -> f64 {
        let am = model.frame_jacobian(&self.u_minus);
        let ap = model.frame_jacobian(&self.u_plus);
        let mut worst: f64 = 0.0;
        for (i, x) in self.mesh.points().enumerate() {
            let a = model.frame_jacobian(self.values.node(i));
            let diff = if x < 0.0 { &a - &am } else { &a - &ap };
            worst = worst.max(diff.amax() * (eta * x.abs()).exp());
        }
        worst
    }

    /// CSV with columns `x, u1..un, du1..dun`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let mut header = vec!["x".to_string()];
        header.extend((1..=n).map(|c| format!("u{c}")));
        header.extend((1..=n).map(|c| format!("du{c}")));
        writeln!(w, "{}", header.join(","))?;
        for (i, x) in self.mesh.points().enumerate() {
            let mut row = vec![format!("{x:.12e}")];
            row.extend(self.values.node(i).iter().map(|v| format!("{v:.16e}")));
            row.extend(self.derivative.node(i).iter().map(|v| format!("{v:.16e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `ū^δ` sampled on the profile's own mesh by cubic Hermite interpolation.
pub fn profile_shift(profile: &ShockProfile, delta: f64) -> Result<NodeField> {
    Ok(profile.sample_shifted(&profile.mesh, delta)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{make_burgers, make_psystem};

    fn burgers() -> ShockProfile {
        solve_profile(&make_burgers(), 40.0, 8001).unwrap()
    }

    #[test]
    fn burgers_matches_closed_form() {
        let p = burgers();
        let err = p
            .mesh
            .points()
            .enumerate()
            .map(|(i, x)| (p.values.node(i)[0] + (0.5 * x).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "sup error {err:e}");
        assert!(p.ode_residual(&make_burgers()) < 1e-10);
        assert!((p.decay_rate - 1.0).abs() < 0.05);
    }

    #[test]
    fn burgers_shift_and_tangent() {
        let p = burgers();
        let s = profile_shift(&p, 0.3).unwrap();
        assert!((s.node(4000)[0] + 0.15f64.tanh()).abs() < 1e-9);
        assert_eq!(profile_shift(&p, 0.0).unwrap(), p.values);
        assert!(matches!(
            profile_shift(&p, 4.0),
            Err(Error::ShiftOutOfRange { .. })
        ));
        let mut errs = Vec::new();
        for d in [1e-2, 1e-3] {
            let s = profile_shift(&p, d).unwrap();
            errs.push(
                s.sub(&p.values)
                    .scaled(1.0 / d)
                    .sub(&p.derivative)
                    .max_abs(),
            );
        }
        assert!(errs[1] < 0.2 * errs[0] && errs[0] < 0.02, "{errs:?}");
    }

    #[test]
    fn psystem_profile_connects() {
        let m = make_psystem(2.0, 1.0, 2.0).unwrap();
        let p = solve_profile(&m, 60.0, 12001).unwrap();
        assert!(p.ode_residual(&m) < 1e-8);
        assert!(p.decay_rate > 0.0);
        assert!(dist(p.values.node(0), &p.u_minus) < 1e-8);
        assert!(dist(p.values.node(12000), &p.u_plus) < 1e-8);
        assert!((p.values.node(6000)[0] - 1.5).abs() < 1e-8);
    }

    #[test]
    fn psystem_short_domain_is_rejected() {
        let m = make_psystem(2.0, 1.0, 2.0).unwrap();
        assert!(matches!(
            solve_profile(&m, 20.0, 4001),
            Err(Error::DomainTooSmall { .. })
        ));
    }

    #[test]
    fn synthetic_decay_rate() {
        let mesh = Mesh::symmetric(10.0, 2001).unwrap();
        let f = |x: f64| {
            if x < 0.0 {
                1.0 + (2.0 * x).exp()
            } else {
                -1.0 + (-2.0 * x).exp()
            }
        };
        let values = NodeField::from_fn(1, mesh.nodes, |i, o| o[0] = f(mesh.x(i)));
        let deriv = NodeField::zeros(1, mesh.nodes);
        let p = ShockProfile::from_samples(mesh, values, deriv, vec![1.0], vec![-1.0]).unwrap();
        assert!((p.decay_rate - 2.0).abs() < 0.01);
    }

    #[test]
    fn constant_field_has_no_tail() {
        let mesh = Mesh::symmetric(10.0, 201).unwrap();
        let values = NodeField::from_fn(1, mesh.nodes, |_, o| o[0] = 1.0);
        let deriv = NodeField::zeros(1, mesh.nodes);
        let r = ShockProfile::from_samples(mesh, values, deriv, vec![1.0], vec![1.0]);
        assert!(matches!(r, Err(Error::TailAtNoiseFloor)));
    }
}
