//! Time integration of the viscous conservation law and its linearization
//! about a standing profile.
//!
//! The scheme is conservative: interface fluxes `F̂_{i+1/2}` are explicit
//! (forward Euler) and the viscous term is Crank–Nicolson,
//!
//! ```text
//! u_i^{k+1} = u_i^k − dt/h (F̂_{i+1/2} − F̂_{i−1/2})
//!           + dt/(2h²) B (Δ²u^{k+1} + Δ²u^k)_i
//! ```
//!
//! with `F̂` either the centered average of `G(u) = F(u) − s u` or the local
//! Lax–Friedrichs flux. `B` must be constant; the implicit part is solved as
//! scalar tridiagonal systems in the eigenbasis of `B`. The first and last
//! node are pinned (Dirichlet).

pub mod steady;

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodeField};
use crate::systems::{real_eigensystem, SystemModel};

pub use steady::DiscreteProfile;

/// Snapshot of a field on a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub mesh: Mesh,
    pub t: f64,
    pub values: NodeField,
}

impl GridField {
    pub fn new(mesh: Mesh, t: f64, values: NodeField) -> Result<Self> {
        if values.nodes() != mesh.nodes {
            return Err(Error::MeshMismatch(format!(
                "{} samples on a mesh of {} nodes",
                values.nodes(),
                mesh.nodes
            )));
        }
        Ok(Self { mesh, t, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxKind {
    #[default]
    Centered,
    LocalLaxFriedrichs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub dt: f64,
    /// Snapshot times in `(0, t_end]`; `t = 0` is always recorded.
    pub snapshots: Vec<f64>,
    pub flux: FluxKind,
}

impl EvolveOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            snapshots: geometric_times(t_end),
            flux: FluxKind::Centered,
        }
    }
}

/// `t_k = 2^{k/2}` for `k ≥ −2` up to `t_end`, with `t_end` appended.
pub fn geometric_times(t_end: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (-2..)
        .map(|k| 2f64.powf(k as f64 / 2.0))
        .take_while(|&t| t < t_end * (1.0 - 1e-12))
        .collect();
    out.push(t_end);
    out
}

/// Recorded snapshots of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mesh: Mesh,
    pub times: Vec<f64>,
    pub fields: Vec<NodeField>,
    /// `∫(u − reference) dx` per snapshot and component.
    pub mass: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn snapshot(&self, k: usize) -> GridField {
        GridField {
            mesh: self.mesh,
            t: self.times[k],
            values: self.fields[k].clone(),
        }
    }

    pub fn last(&self) -> &NodeField {
        self.fields
            .last()
            .expect("trajectory has the initial snapshot")
    }

    /// Largest change of the mass record relative to `t = 0`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = &self.mass[0];
        self.mass
            .iter()
            .flat_map(|m| m.iter().zip(m0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// One CSV per snapshot (`x, u1..un`) and `manifest.json`.
    pub fn write_dir(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, field) in self.fields.iter().enumerate() {
            let name = format!("{stem}_{k:03}.csv");
            let mut w = std::io::BufWriter::new(fs::File::create(dir.join(&name))?);
            let header: Vec<String> = std::iter::once("x".to_string())
                .chain((1..=field.dim).map(|c| format!("u{c}")))
                .collect();
            writeln!(w, "{}", header.join(","))?;
            for (i, x) in self.mesh.points().enumerate() {
                let row: Vec<String> = field.node(i).iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(w, "{x:.12e},{}", row.join(","))?;
            }
            files.push(name);
        }
        let manifest = serde_json::json!({
            "mesh": self.mesh,
            "times": self.times,
            "mass": self.mass,
            "files": files,
        });
        fs::write(
            dir.join(format!("{stem}_manifest.json")),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}

/// The explicit part of the scheme.
enum Transport<'a> {
    Nonlinear(&'a SystemModel),
    /// `A_i` per node, row-major `n × n`.
    Linear(Vec<f64>),
}

/// `B = R diag(b) L`, or `None` when `B` is already diagonal.
struct ViscosityBasis {
    b: Vec<f64>,
    left: Option<DMatrix<f64>>,
    right: Option<DMatrix<f64>>,
}

fn viscosity_basis(model: &SystemModel, background: &NodeField) -> Result<ViscosityBasis> {
    let b0 = model.law.viscosity(model.u_minus.as_slice());
    let samples = [0, background.nodes() / 2, background.nodes() - 1];
    for &i in &samples {
        let bi = model.law.viscosity(background.node(i));
        if (&bi - &b0).amax() > 1e-13 * b0.amax().max(1.0) {
            return Err(Error::VariableViscosity);
        }
    }
    if (model.law.viscosity(model.u_plus.as_slice()) - &b0).amax() > 1e-13 * b0.amax().max(1.0) {
        return Err(Error::VariableViscosity);
    }
    let n = b0.nrows();
    let off_diag = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j);
    let diagonal = off_diag.clone().all(|(i, j)| b0[(i, j)] == 0.0);
    let (b, left, right) = if diagonal {
        ((0..n).map(|i| b0[(i, i)]).collect::<Vec<_>>(), None, None)
    } else {
        let (lambda, l, r) = real_eigensystem(&b0)?;
        (lambda, Some(l), Some(r))
    };
    if let Some(&bad) = b.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::NonpositiveBeta(bad));
    }
    Ok(ViscosityBasis { b, left, right })
}

/// Largest shock-frame characteristic speed magnitude at the endstates.
pub fn max_speed(model: &SystemModel) -> Result<f64> {
    let mut m: f64 = 0.0;
    for u in [&model.u_minus, &model.u_plus] {
        let j = model.frame_jacobian(u.as_slice());
        for z in j.complex_eigenvalues().iter() {
            m = m.max(z.norm());
        }
    }
    Ok(m)
}

/// Time-step limits `(CFL, centered-flux stability)`.
pub fn step_limits(model: &SystemModel, h: f64) -> Result<(f64, f64)> {
    let a = max_speed(model)?;
    let bmin = {
        let b = model.law.viscosity(model.u_minus.as_slice());
        b.complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min)
    };
    let cfl = if a > 0.0 { 0.4 * h / a } else { f64::INFINITY };
    let stab = if a > 0.0 {
        2.0 * bmin / (a * a)
    } else {
        f64::INFINITY
    };
    Ok((cfl, stab))
}

/// Largest admissible step for mesh spacing `h`.
pub fn stable_dt(model: &SystemModel, h: f64) -> Result<f64> {
    let (cfl, stab) = step_limits(model, h)?;
    Ok(cfl.min(0.5 * stab))
}

struct Stepper<'a> {
    transport: Transport<'a>,
    flux_kind: FluxKind,
    basis: ViscosityBasis,
    n: usize,
    nodes: usize,
    h: f64,
    /// Node fluxes and interface fluxes.
    g: Vec<f64>,
    fhat: Vec<f64>,
    rhs: Vec<f64>,
    lambda: Vec<f64>,
    cp: Vec<f64>,
    dp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(
        transport: Transport<'a>,
        flux_kind: FluxKind,
        basis: ViscosityBasis,
        n: usize,
        mesh: &Mesh,
    ) -> Self {
        let nodes = mesh.nodes;
        Self {
            transport,
            flux_kind,
            basis,
            n,
            nodes,
            h: mesh.spacing(),
            g: vec![0.0; n * nodes],
            fhat: vec![0.0; n * (nodes - 1)],
            rhs: vec![0.0; n * nodes],
            lambda: vec![0.0; nodes],
            cp: vec![0.0; nodes],
            dp: vec![0.0; nodes],
        }
    }

    fn node_fluxes(&mut self, u: &[f64]) {
        let n = self.n;
        let par = self.nodes > 4096;
        match &self.transport {
            Transport::Nonlinear(model) => {
                let body = |(gi, ui): (&mut [f64], &[f64])| model.frame_flux(ui, gi);
                if par {
                    self.g.par_chunks_mut(n).zip(u.par_chunks(n)).for_each(body);
                } else {
                    self.g.chunks_mut(n).zip(u.chunks(n)).for_each(body);
                }
            }
            Transport::Linear(a) => {
                let body = |((gi, ui), ai): ((&mut [f64], &[f64]), &[f64])| {
                    for r in 0..n {
                        gi[r] = (0..n).map(|c| ai[r * n + c] * ui[c]).sum();
                    }
                };
                if par {
                    self.g
                        .par_chunks_mut(n)
                        .zip(u.par_chunks(n))
                        .zip(a.par_chunks(n * n))
                        .for_each(body);
                } else {
                    self.g
                        .chunks_mut(n)
                        .zip(u.chunks(n))
                        .zip(a.chunks(n * n))
                        .for_each(body);
                }
            }
        }
        if self.flux_kind == FluxKind::LocalLaxFriedrichs {
            for i in 0..self.nodes {
                let j = match &self.transport {
                    Transport::Nonlinear(model) => model.frame_jacobian(&u[i * n..(i + 1) * n]),
                    Transport::Linear(a) => {
                        DMatrix::from_row_slice(n, n, &a[i * n * n..(i + 1) * n * n])
                    }
                };
                self.lambda[i] = j
                    .complex_eigenvalues()
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
            }
        }
    }

    /// One step of size `dt`; boundary nodes stay fixed.
    fn step(&mut self, u: &mut [f64], dt: f64) {
        let (n, nodes, h) = (self.n, self.nodes, self.h);
        self.node_fluxes(u);
        let llf = self.flux_kind == FluxKind::LocalLaxFriedrichs;
        for i in 0..nodes - 1 {
            let lam = if llf {
                self.lambda[i].max(self.lambda[i + 1])
            } else {
                0.0
            };
            for c in 0..n {
                self.fhat[i * n + c] = 0.5 * (self.g[i * n + c] + self.g[(i + 1) * n + c])
                    - 0.5 * lam * (u[(i + 1) * n + c] - u[i * n + c]);
            }
        }
        self.rhs.copy_from_slice(u);
        for i in 1..nodes - 1 {
            for c in 0..n {
                self.rhs[i * n + c] -= dt / h * (self.fhat[i * n + c] - self.fhat[(i - 1) * n + c]);
            }
        }
        // implicit diffusion in the eigenbasis of B
        if let Some(l) = &self.basis.left {
            apply_blockwise(l, &mut self.rhs, n);
        }
        let mut w = u.to_vec();
        if let Some(l) = &self.basis.left {
            apply_blockwise(l, &mut w, n);
        }
        let m = nodes - 2;
        for c in 0..n {
            let kappa = dt * self.basis.b[c] / (2.0 * h * h);
            let diag = 1.0 + 2.0 * kappa;
            let (lo, hi) = (w[c], w[(nodes - 1) * n + c]);
            for k in 1..=m {
                let lap = w[(k + 1) * n + c] - 2.0 * w[k * n + c] + w[(k - 1) * n + c];
                let mut r = self.rhs[k * n + c] + kappa * lap;
                if k == 1 {
                    r += kappa * lo;
                }
                if k == m {
                    r += kappa * hi;
                }
                let (cprev, dprev) = if k == 1 {
                    (0.0, 0.0)
                } else {
                    (self.cp[k - 1], self.dp[k - 1])
                };
                let denom = diag + kappa * cprev;
                self.cp[k] = -kappa / denom;
                self.dp[k] = (r + kappa * dprev) / denom;
            }
            w[m * n + c] = self.dp[m];
            for k in (1..m).rev() {
                w[k * n + c] = self.dp[k] - self.cp[k] * w[(k + 1) * n + c];
            }
        }
        if let Some(r) = &self.basis.right {
            apply_blockwise(r, &mut w, n);
        }
        for i in 1..nodes - 1 {
            u[i * n..(i + 1) * n].copy_from_slice(&w[i * n..(i + 1) * n]);
        }
    }
}

fn apply_blockwise(m: &DMatrix<f64>, v: &mut [f64], n: usize) {
    let mut tmp = vec![0.0; n];
    for chunk in v.chunks_mut(n) {
        for (r, t) in tmp.iter_mut().enumerate() {
            *t = (0..n).map(|c| m[(r, c)] * chunk[c]).sum();
        }
        chunk.copy_from_slice(&tmp);
    }
}

fn check_dt(model: &SystemModel, h: f64, dt: f64) -> Result<()> {
    let (cfl, stab) = step_limits(model, h)?;
    let limit = cfl.min(stab);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    Ok(())
}

fn run(
    stepper: &mut Stepper,
    initial: &GridField,
    reference: &NodeField,
    opts: &EvolveOptions,
    blowup: impl Fn(&[f64]) -> Option<f64>,
) -> Result<Trajectory> {
    let mesh = initial.mesh;
    let h = mesh.spacing();
    let mut u = initial.values.data.clone();
    let n = initial.values.dim;
    let mass_of = |u: &[f64]| {
        let field = NodeField {
            dim: n,
            data: u.to_vec(),
        }
        .sub(reference);
        field.integral(h)
    };
    let mut traj = Trajectory {
        mesh,
        times: vec![initial.t],
        fields: vec![initial.values.clone()],
        mass: vec![mass_of(&u)],
    };
    let mut t = initial.t;
    for &target in opts.snapshots.iter().filter(|&&s| s > initial.t) {
        let steps = ((target - t) / opts.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = (target - t) / steps as f64;
        for k in 0..steps {
            stepper.step(&mut u, dt);
            if k % 64 == 63 || k + 1 == steps {
                if let Some(value) = blowup(&u) {
                    return Err(Error::BlowUp {
                        t: t + (k + 1) as f64 * dt,
                        value,
                    });
                }
            }
        }
        t = target;
        traj.times.push(t);
        traj.fields.push(NodeField {
            dim: n,
            data: u.clone(),
        });
        traj.mass.push(mass_of(&u));
    }
    Ok(traj)
}

/// Evolves the full system from `initial`; `background` (usually the
/// profile on the same mesh) is the mass reference and supplies the check
/// that the data start near the profile.
pub fn evolve_nonlinear(
    model: &SystemModel,
    background: &NodeField,
    initial: &GridField,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let mesh = initial.mesh;
    if background.nodes() != mesh.nodes {
        return Err(Error::MeshMismatch(
            "background and initial data differ in size".into(),
        ));
    }
    check_dt(model, mesh.spacing(), opts.dt)?;
    let range = (&model.u_plus - &model.u_minus).amax();
    let dist = initial.values.sub(background).max_abs();
    if range > 0.0 && dist >= 0.2 * range {
        return Err(Error::InvalidParameter(format!(
            "initial data deviate from the profile by {dist:e}, at least 0.2 |u+ - u-|"
        )));
    }
    let basis = viscosity_basis(model, background)?;
    let n = model.dim();
    let mut stepper = Stepper::new(Transport::Nonlinear(model), opts.flux, basis, n, &mesh);
    let lo: Vec<f64> = (0..n)
        .map(|c| model.u_minus[c].min(model.u_plus[c]))
        .collect();
    let hi: Vec<f64> = (0..n)
        .map(|c| model.u_minus[c].max(model.u_plus[c]))
        .collect();
    let span = if range > 0.0 {
        range
    } else {
        initial.values.max_abs().max(1e-300)
    };
    run(&mut stepper, initial, background, opts, move |u| {
        let mut worst: f64 = 0.0;
        for ui in u.chunks(n) {
            for c in 0..n {
                let excess = (lo[c] - ui[c]).max(ui[c] - hi[c]).max(0.0);
                if !ui[c].is_finite() {
                    return Some(f64::INFINITY);
                }
                worst = worst.max(excess);
            }
        }
        (worst > 10.0 * span).then_some(worst)
    })
}

/// Evolves `v_t = −(A v)_x + (B v_x)_x` with `A = dF(ū) − sI` frozen on
/// `background`. The discrete operator is the exact linearization of the
/// nonlinear scheme about `background`.
pub fn evolve_linearized(
    model: &SystemModel,
    background: &NodeField,
    initial: &GridField,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let mesh = initial.mesh;
    if background.nodes() != mesh.nodes {
        return Err(Error::MeshMismatch(
            "background and initial data differ in size".into(),
        ));
    }
    check_dt(model, mesh.spacing(), opts.dt)?;
    let basis = viscosity_basis(model, background)?;
    let n = model.dim();
    let mut a = Vec::with_capacity(n * n * mesh.nodes);
    for i in 0..mesh.nodes {
        let j = model.frame_jacobian(background.node(i));
        for r in 0..n {
            for c in 0..n {
                a.push(j[(r, c)]);
            }
        }
    }
    let mut stepper = Stepper::new(Transport::Linear(a), opts.flux, basis, n, &mesh);
    let zero = NodeField::zeros(n, mesh.nodes);
    let scale = initial.values.max_abs().max(1e-300);
    run(&mut stepper, initial, &zero, opts, move |v| {
        let m = v.iter().fold(0.0f64, |m, x| {
            if x.is_finite() {
                m.max(x.abs())
            } else {
                f64::INFINITY
            }
        });
        (m > 1e3 * scale).then_some(m)
    })
}

/// Linearized evolution of a unit-mass Gaussian of width `sigma0` at `y`
/// in component `component`: an approximation of `G(·, t; y) e_component`.
pub fn green_function_approx(
    model: &SystemModel,
    background: &NodeField,
    mesh: Mesh,
    y: f64,
    sigma0: f64,
    component: usize,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let h = mesh.spacing();
    if sigma0 < 3.0 * h * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "source width {sigma0} below 3h = {}",
            3.0 * h
        )));
    }
    let n = model.dim();
    let mut values = NodeField::zeros(n, mesh.nodes);
    for (i, x) in mesh.points().enumerate() {
        values.node_mut(i)[component] = (-(x - y).powi(2) / (2.0 * sigma0 * sigma0)).exp();
    }
    // normalize the discrete mass exactly
    let mass = values.integral(h)[component];
    let values = values.scaled(1.0 / mass);
    evolve_linearized(model, background, &GridField::new(mesh, 0.0, values)?, opts)
}
