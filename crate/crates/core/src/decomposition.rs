//! Mass bookkeeping for a perturbed shock: the initial split of excess mass
//! into diffusion waves and a profile shift, the shift track `δ(t)`, and the
//! residual `v` in its three variants.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion_waves::DiffusionWaveSet;
use crate::error::{Error, Result};
use crate::evolution::{DiscreteProfile, GridField, Trajectory};
use crate::mesh::{Mesh, NodeField};
use crate::profile::ShockProfile;
use crate::systems::{EndstateData, OutgoingMode};

/// A one-parameter family of profiles `δ ↦ ū^δ` sampled on a fixed mesh.
pub trait ShiftFamily: Sync {
    fn mesh(&self) -> Mesh;
    /// `ū^δ` and `∂_δ ū^δ` at the nodes.
    fn shifted(&self, delta: f64) -> Result<(NodeField, NodeField)>;
}

impl ShiftFamily for DiscreteProfile {
    fn mesh(&self) -> Mesh {
        self.mesh
    }
    fn shifted(&self, delta: f64) -> Result<(NodeField, NodeField)> {
        self.sample(delta)
    }
}

/// The continuous profile resampled on another mesh.
#[derive(Debug, Clone)]
pub struct SampledProfile<'a> {
    pub profile: &'a ShockProfile,
    pub mesh: Mesh,
}

impl ShiftFamily for SampledProfile<'_> {
    fn mesh(&self) -> Mesh {
        self.mesh
    }
    fn shifted(&self, delta: f64) -> Result<(NodeField, NodeField)> {
        self.profile.sample_shifted(&self.mesh, delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassDecomposition {
    /// `M₀ = ∫(ũ₀ − ū) dx`.
    pub excess_mass: Vec<f64>,
    pub modes: Vec<OutgoingMode>,
    pub masses: Vec<f64>,
    pub delta_star: f64,
    /// `|M₀ − Σ m_j r_j − δ*(u₊ − u₋)|`.
    pub residual: f64,
}

impl MassDecomposition {
    /// Diffusion waves carrying the outgoing masses.
    pub fn waves(&self, minus: &EndstateData, plus: &EndstateData) -> Result<DiffusionWaveSet> {
        DiffusionWaveSet::from_modes(minus, plus, &self.modes, &self.masses)
    }
}

/// Columns `r_j` of the outgoing modes followed by `u₊ − u₋`.
fn mass_basis(
    minus: &EndstateData,
    plus: &EndstateData,
    modes: &[OutgoingMode],
) -> Result<DMatrix<f64>> {
    let n = minus.dim();
    if modes.len() + 1 != n {
        return Err(Error::DegenerateBasis(0.0));
    }
    let jump = &plus.state - &minus.state;
    let mut basis = DMatrix::zeros(n, n);
    for (k, mode) in modes.iter().enumerate() {
        let data = match mode.side {
            crate::systems::Side::Minus => minus,
            crate::systems::Side::Plus => plus,
        };
        basis.set_column(k, &data.r(mode.index));
    }
    basis.set_column(n - 1, &jump);
    Ok(basis)
}

fn solve_basis(basis: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let sv = basis.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::DegenerateBasis(smin / smax));
    }
    basis
        .clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::DegenerateBasis(0.0))
}

/// Splits the excess mass of `perturbation` (`ũ₀ − ū` on a mesh) as
/// `M₀ = Σ m_j r_j + δ*(u₊ − u₋)`.
pub fn decompose_initial(
    minus: &EndstateData,
    plus: &EndstateData,
    modes: &[OutgoingMode],
    perturbation: &GridField,
) -> Result<MassDecomposition> {
    let m0 = perturbation.values.integral(perturbation.mesh.spacing());
    decompose_mass(minus, plus, modes, &m0)
}

pub fn decompose_mass(
    minus: &EndstateData,
    plus: &EndstateData,
    modes: &[OutgoingMode],
    m0: &[f64],
) -> Result<MassDecomposition> {
    let basis = mass_basis(minus, plus, modes)?;
    let rhs = DVector::from_column_slice(m0);
    let c = solve_basis(&basis, &rhs)?;
    let residual = (&basis * &c - &rhs).amax();
    let k = modes.len();
    Ok(MassDecomposition {
        excess_mass: m0.to_vec(),
        modes: modes.to_vec(),
        masses: c.as_slice()[..k].to_vec(),
        delta_star: c[k],
        residual,
    })
}

/// Re-solves the split against the discrete masses of `family` and `waves`
/// on the mesh, so that `∫(ũ₀ − ū^{δ*} − φ(·,0)) dx` vanishes to quadrature
/// tolerance. `perturbation` is `ũ₀ − ū^0`.
pub fn refine_decomposition(
    decomposition: &MassDecomposition,
    minus: &EndstateData,
    plus: &EndstateData,
    family: &dyn ShiftFamily,
    perturbation: &GridField,
) -> Result<MassDecomposition> {
    let mesh = family.mesh();
    let h = mesh.spacing();
    let n = minus.dim();
    let k = decomposition.modes.len();
    let (base, _) = family.shifted(0.0)?;
    let m0 = perturbation.values.integral(h);
    // discrete mass of a unit wave per mode
    let unit_mass: Vec<Vec<f64>> = decomposition
        .modes
        .iter()
        .map(|mode| {
            let set = DiffusionWaveSet::from_modes(minus, plus, &[*mode], &[1.0])?;
            let field = wave_field(&set, &mesh, 0.0)?;
            Ok(field.integral(h))
        })
        .collect::<Result<_>>()?;
    let mut c: Vec<f64> = decomposition.masses.clone();
    let mut delta = decomposition.delta_star;
    for _ in 0..20 {
        let (u, du) = family.shifted(delta)?;
        let shift_mass = u.sub(&base).integral(h);
        let tangent_mass = du.integral(h);
        let mut jac = DMatrix::zeros(n, n);
        let mut res = DVector::zeros(n);
        for r in 0..n {
            res[r] = shift_mass[r] - m0[r] + (0..k).map(|j| c[j] * unit_mass[j][r]).sum::<f64>();
            for j in 0..k {
                jac[(r, j)] = unit_mass[j][r];
            }
            jac[(r, k)] = tangent_mass[r];
        }
        let step = solve_basis(&jac, &res)?;
        for j in 0..k {
            c[j] -= step[j];
        }
        delta -= step[k];
        if step.amax() < 1e-14 * (1.0 + delta.abs()) {
            break;
        }
    }
    let (u, _) = family.shifted(delta)?;
    let shift_mass = u.sub(&base).integral(h);
    let residual = (0..n)
        .map(|r| {
            (shift_mass[r] - m0[r] + (0..k).map(|j| c[j] * unit_mass[j][r]).sum::<f64>()).abs()
        })
        .fold(0.0, f64::max);
    Ok(MassDecomposition {
        excess_mass: m0,
        modes: decomposition.modes.clone(),
        masses: c,
        delta_star: delta,
        residual,
    })
}

/// `φ(·, t)` sampled on `mesh`.
pub fn wave_field(phi: &DiffusionWaveSet, mesh: &Mesh, t: f64) -> Result<NodeField> {
    let mut out = NodeField::zeros(phi.dim, mesh.nodes);
    for i in 0..mesh.nodes {
        phi.eval(mesh.x(i), t, out.node_mut(i))?;
    }
    Ok(out)
}

/// Shift `δ(t)` relative to `ū^{δ*}` on the snapshot times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTrack {
    pub times: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_dot: Vec<f64>,
    /// Tracker value at `t = 0`; the track itself starts from `δ(0) = 0`.
    pub fit_at_zero: f64,
}

impl ShiftTrack {
    /// Builds the track, with `δ̇` from three-point differences on the
    /// (non-uniform) time grid.
    pub fn from_samples(times: Vec<f64>, mut delta: Vec<f64>) -> Self {
        let mut fit_at_zero = 0.0;
        if times.first() == Some(&0.0) {
            fit_at_zero = delta[0];
            delta[0] = 0.0;
        }
        let delta_dot = differentiate(&times, &delta);
        Self {
            times,
            delta,
            delta_dot,
            fit_at_zero,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,delta,delta_dot")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{:.12e},{:.16e},{:.16e}",
                self.times[k], self.delta[k], self.delta_dot[k]
            )?;
        }
        Ok(())
    }
}

/// Derivative of samples on a non-uniform grid: second-order three-point
/// formula inside, one-sided at the ends.
pub fn differentiate(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    if n == 2 {
        let d = (y[1] - y[0]) / (t[1] - t[0]);
        return vec![d, d];
    }
    let three = |i: usize, at: usize| {
        let (t0, t1, t2) = (t[i], t[i + 1], t[i + 2]);
        let x = t[at];
        let w0 = (2.0 * x - t1 - t2) / ((t0 - t1) * (t0 - t2));
        let w1 = (2.0 * x - t0 - t2) / ((t1 - t0) * (t1 - t2));
        let w2 = (2.0 * x - t0 - t1) / ((t2 - t0) * (t2 - t1));
        w0 * y[i] + w1 * y[i + 1] + w2 * y[i + 2]
    };
    (0..n)
        .map(|k| match k {
            0 => three(0, 0),
            k if k == n - 1 => three(n - 3, n - 1),
            k => three(k - 1, k),
        })
        .collect()
}

/// Fit window `|x| ≤ 5/α` for the tracker.
pub fn tracking_window(decay_rate: f64) -> f64 {
    5.0 / decay_rate
}

/// Gauss–Newton fit of `δ` minimizing
/// `‖field − (ū^{δ*+δ} − ū^{δ*}) − φ(·,t)‖` on `|x| ≤ window`, started from
/// `δ = 0`. `field` is `ũ − ū^{δ*}`.
pub fn track_delta(
    family: &dyn ShiftFamily,
    delta_star: f64,
    phi: &DiffusionWaveSet,
    field: &GridField,
    window: f64,
) -> Result<f64> {
    let mesh = family.mesh();
    if !mesh.same_as(&field.mesh) {
        return Err(Error::MeshMismatch(
            "tracked field and profile family differ".into(),
        ));
    }
    let (base, _) = family.shifted(delta_star)?;
    let phi_t = wave_field(phi, &mesh, field.t)?;
    let target = field.values.sub(&phi_t);
    let n = base.dim;
    let nodes: Vec<usize> = (0..mesh.nodes)
        .filter(|&i| mesh.x(i).abs() <= window)
        .collect();
    let mut delta = 0.0;
    let mut residual = f64::NAN;
    for _ in 0..50 {
        let (u, du) = family.shifted(delta_star + delta)?;
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &nodes {
            for c in 0..n {
                let r = target.node(i)[c] - (u.node(i)[c] - base.node(i)[c]);
                num += r * du.node(i)[c];
                den += du.node(i)[c] * du.node(i)[c];
            }
        }
        if !(den > 0.0) {
            return Err(Error::DegenerateBasis(den));
        }
        let step = num / den;
        delta += step;
        // the family is smooth in δ only down to its rounding noise
        if step.abs() <= 1e-9 * (1.0 + delta.abs()) {
            return Ok(delta);
        }
        residual = step.abs();
    }
    Err(Error::NoConvergence {
        iterations: 50,
        residual,
    })
}

/// Tracks every snapshot of a trajectory of `ũ` (parallel across snapshots).
pub fn track_trajectory(
    family: &dyn ShiftFamily,
    delta_star: f64,
    phi: &DiffusionWaveSet,
    trajectory: &Trajectory,
    window: f64,
) -> Result<ShiftTrack> {
    let (base, _) = family.shifted(delta_star)?;
    let deltas: Vec<f64> = (0..trajectory.len())
        .into_par_iter()
        .map(|k| {
            let snap = trajectory.snapshot(k);
            let field = GridField {
                mesh: snap.mesh,
                t: snap.t,
                values: snap.values.sub(&base),
            };
            track_delta(family, delta_star, phi, &field, window)
        })
        .collect::<Result<_>>()?;
    Ok(ShiftTrack::from_samples(trajectory.times.clone(), deltas))
}

/// The three residual variants as trajectories on the run's mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `ũ − ū^{δ*} − φ − ∂_δū^{δ*} δ(t)`.
    pub theorem: Trajectory,
    /// `ũ − ū^{δ*+δ(t)} − φ`.
    pub shifted: Trajectory,
    /// `ũ − ū^{δ*} − φ`.
    pub unshifted: Trajectory,
}

pub fn assemble_residual(
    trajectory: &Trajectory,
    decomposition: &MassDecomposition,
    phi: &DiffusionWaveSet,
    track: &ShiftTrack,
    family: &dyn ShiftFamily,
) -> Result<Residuals> {
    let mesh = trajectory.mesh;
    if !mesh.same_as(&family.mesh()) || track.times.len() != trajectory.len() {
        return Err(Error::MeshMismatch(
            "trajectory, profile family and shift track disagree".into(),
        ));
    }
    if track
        .times
        .iter()
        .zip(&trajectory.times)
        .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b))
    {
        return Err(Error::MeshMismatch(
            "shift track times differ from snapshots".into(),
        ));
    }
    let h = mesh.spacing();
    let ds = decomposition.delta_star;
    let (base, tangent) = family.shifted(ds)?;
    let rows: Vec<[NodeField; 3]> = (0..trajectory.len())
        .into_par_iter()
        .map(|k| {
            let t = trajectory.times[k];
            let phi_t = wave_field(phi, &mesh, t)?;
            let unshifted = trajectory.fields[k].sub(&base).sub(&phi_t);
            let mut theorem = unshifted.clone();
            theorem.axpy(-track.delta[k], &tangent);
            let (moved, _) = family.shifted(ds + track.delta[k])?;
            let shifted = trajectory.fields[k].sub(&moved).sub(&phi_t);
            Ok([theorem, shifted, unshifted])
        })
        .collect::<Result<_>>()?;
    let build = |which: usize| {
        let fields: Vec<NodeField> = rows.iter().map(|r| r[which].clone()).collect();
        let mass = fields.iter().map(|f| f.integral(h)).collect();
        Trajectory {
            mesh,
            times: trajectory.times.clone(),
            fields,
            mass,
        }
    };
    Ok(Residuals {
        theorem: build(0),
        shifted: build(1),
        unshifted: build(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{endstate_data, make_burgers, make_psystem, outgoing_modes, Side};

    fn data(model: &crate::systems::SystemModel) -> (EndstateData, EndstateData) {
        (
            endstate_data(model, Side::Minus, model.u_minus.as_slice()).unwrap(),
            endstate_data(model, Side::Plus, model.u_plus.as_slice()).unwrap(),
        )
    }

    #[test]
    fn burgers_mass_goes_to_shift() {
        let model = make_burgers();
        let (m, p) = data(&model);
        let modes = outgoing_modes(&m, &p);
        let d = decompose_mass(&m, &p, &modes, &[0.1]).unwrap();
        assert!(d.masses.is_empty());
        assert!((d.delta_star + 0.05).abs() < 1e-15);
        assert!(d.residual < 1e-12);
    }

    #[test]
    fn psystem_aligned_mass() {
        let model = make_psystem(2.0, 1.0, 2.0).unwrap();
        let (m, p) = data(&model);
        let modes = outgoing_modes(&m, &p);
        let r = m.r(modes[0].index) * 0.01;
        let d = decompose_mass(&m, &p, &modes, r.as_slice()).unwrap();
        assert!((d.masses[0] - 0.01).abs() < 1e-14);
        assert!(d.delta_star.abs() < 1e-14);
        let z = decompose_mass(&m, &p, &modes, &[0.0, 0.0]).unwrap();
        assert_eq!(z.masses, vec![0.0]);
        assert_eq!(z.delta_star, 0.0);
    }

    #[test]
    fn differentiate_is_exact_for_quadratics() {
        let t = [0.0, 0.5, 0.7, 1.0, 1.4, 2.0];
        let y: Vec<f64> = t.iter().map(|s| 3.0 * s * s - s + 2.0).collect();
        for (s, d) in t.iter().zip(differentiate(&t, &y)) {
            assert!((d - (6.0 * s - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn track_starts_at_zero() {
        let tr = ShiftTrack::from_samples(vec![0.0, 1.0, 2.0], vec![0.3, 0.2, 0.1]);
        assert_eq!(tr.delta[0], 0.0);
        assert_eq!(tr.fit_at_zero, 0.3);
    }
}
