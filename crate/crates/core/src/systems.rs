//! Conservation-law models `u_t + F(u)_x = (B(u) u_x)_x` and the
//! characteristic data of their endstates.
//!
//! Everything is expressed in the frame moving with the shock: the effective
//! flux is `F(u) - s u`, so reported speeds are `a_j = λ_j(dF(u)) - s`.
//!
//! Eigenvector convention: right eigenvectors are scaled so their first
//! nonzero component is `+1`; left eigenvectors are the rows of `R^{-1}`,
//! which gives `l_j · r_k = δ_jk`. The coupling coefficients `γ_j` depend on
//! this scale.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A flux/viscosity pair. Implementations must be cheap to evaluate; the
/// evolution solver calls [`ConservationLaw::flux`] once per node per step.
pub trait ConservationLaw: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    /// Writes `F(u)` into `out`.
    fn flux(&self, u: &[f64], out: &mut [f64]);
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64>;
    /// The symmetric bilinear form `d²F(u)(v, w)`.
    fn hessian(&self, u: &[f64], v: &[f64], w: &[f64]) -> DVector<f64>;
    fn viscosity(&self, u: &[f64]) -> DMatrix<f64>;
    fn name(&self) -> &'static str;
}

/// Inviscid Burgers flux `u²/2` with unit viscosity.
#[derive(Debug, Clone, Copy)]
pub struct Burgers;

impl ConservationLaw for Burgers {
    fn dim(&self) -> usize {
        1
    }
    fn flux(&self, u: &[f64], out: &mut [f64]) {
        out[0] = 0.5 * u[0] * u[0];
    }
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, u[0])
    }
    fn hessian(&self, _u: &[f64], v: &[f64], w: &[f64]) -> DVector<f64> {
        DVector::from_element(1, v[0] * w[0])
    }
    fn viscosity(&self, _u: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }
    fn name(&self) -> &'static str {
        "burgers"
    }
}

/// Isentropic gas dynamics in Lagrangian coordinates, state `(v, u)`,
/// `F(v, u) = (-u, p(v))` with `p(v) = v^{-γ}`, identity viscosity.
#[derive(Debug, Clone, Copy)]
pub struct PSystem {
    pub gamma_gas: f64,
}

impl PSystem {
    pub fn pressure(&self, v: f64) -> f64 {
        v.powf(-self.gamma_gas)
    }
    fn dp(&self, v: f64) -> f64 {
        -self.gamma_gas * v.powf(-self.gamma_gas - 1.0)
    }
    fn d2p(&self, v: f64) -> f64 {
        self.gamma_gas * (self.gamma_gas + 1.0) * v.powf(-self.gamma_gas - 2.0)
    }
}

impl ConservationLaw for PSystem {
    fn dim(&self) -> usize {
        2
    }
    fn flux(&self, u: &[f64], out: &mut [f64]) {
        out[0] = -u[1];
        out[1] = self.pressure(u[0]);
    }
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, self.dp(u[0]), 0.0])
    }
    fn hessian(&self, u: &[f64], v: &[f64], w: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![0.0, self.d2p(u[0]) * v[0] * w[0]])
    }
    fn viscosity(&self, _u: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn name(&self) -> &'static str {
        "psystem"
    }
}

/// Scalar linear advection–diffusion `u_t + a u_x = b u_xx`; with `a = 0`
/// the heat equation.
#[derive(Debug, Clone, Copy)]
pub struct AdvectionDiffusion {
    pub speed: f64,
    pub diffusion: f64,
}

impl ConservationLaw for AdvectionDiffusion {
    fn dim(&self) -> usize {
        1
    }
    fn flux(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.speed * u[0];
    }
    fn jacobian(&self, _u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.speed)
    }
    fn hessian(&self, _u: &[f64], _v: &[f64], _w: &[f64]) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn viscosity(&self, _u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.diffusion)
    }
    fn name(&self) -> &'static str {
        "advection-diffusion"
    }
}

/// Advection–diffusion with zero far field (no shock); used for
/// solver benchmarks.
pub fn make_advection_diffusion(speed: f64, diffusion: f64) -> SystemModel {
    SystemModel {
        law: Arc::new(AdvectionDiffusion { speed, diffusion }),
        shock_speed: 0.0,
        u_minus: DVector::zeros(1),
        u_plus: DVector::zeros(1),
    }
}

/// Which endstate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "+")]
    Plus,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }
}

/// A conservation law together with a connecting shock: endstates and
/// shock speed.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub law: Arc<dyn ConservationLaw>,
    pub shock_speed: f64,
    pub u_minus: DVector<f64>,
    pub u_plus: DVector<f64>,
}

impl SystemModel {
    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    /// Shock-frame flux `F(u) - s u`.
    pub fn frame_flux(&self, u: &[f64], out: &mut [f64]) {
        self.law.flux(u, out);
        for (o, ui) in out.iter_mut().zip(u) {
            *o -= self.shock_speed * ui;
        }
    }

    /// Shock-frame Jacobian `dF(u) - s I`.
    pub fn frame_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        self.law.jacobian(u) - DMatrix::identity(n, n) * self.shock_speed
    }

    pub fn endstate(&self, side: Side) -> &DVector<f64> {
        match side {
            Side::Minus => &self.u_minus,
            Side::Plus => &self.u_plus,
        }
    }

    /// `F(u₊) - F(u₋) - s (u₊ - u₋)`.
    pub fn rankine_hugoniot_residual(&self) -> DVector<f64> {
        let n = self.dim();
        let mut fm = vec![0.0; n];
        let mut fp = vec![0.0; n];
        self.frame_flux(self.u_minus.as_slice(), &mut fm);
        self.frame_flux(self.u_plus.as_slice(), &mut fp);
        DVector::from_iterator(n, fp.iter().zip(&fm).map(|(a, b)| a - b))
    }

    pub fn endstate_data(&self, side: Side) -> Result<EndstateData> {
        endstate_data(self, side, self.endstate(side).as_slice())
    }

    /// Number of characteristics entering the shock from both sides.
    pub fn incoming_count(&self) -> Result<usize> {
        let minus = self.endstate_data(Side::Minus)?;
        let plus = self.endstate_data(Side::Plus)?;
        Ok(minus.speeds.iter().filter(|&&a| a > 0.0).count()
            + plus.speeds.iter().filter(|&&a| a < 0.0).count())
    }

    /// True when the ideal shock has exactly `n + 1` incoming characteristics.
    pub fn is_lax(&self) -> bool {
        matches!(self.incoming_count(), Ok(i) if i == self.dim() + 1)
    }
}

/// The scalar model `u_t + (u²/2)_x = u_xx` with the standing shock
/// `u₋ = 1`, `u₊ = -1`.
pub fn make_burgers() -> SystemModel {
    SystemModel {
        law: Arc::new(Burgers),
        shock_speed: 0.0,
        u_minus: DVector::from_element(1, 1.0),
        u_plus: DVector::from_element(1, -1.0),
    }
}

/// The p-system shock connecting specific volumes `v_minus` and `v_plus`
/// (with `u₋ = 0`), speed chosen from the Rankine–Hugoniot relations so the
/// Lax inequalities hold.
pub fn make_psystem(gamma_gas: f64, v_minus: f64, v_plus: f64) -> Result<SystemModel> {
    if !(gamma_gas > 0.0) || !(v_minus > 0.0) || !(v_plus > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "p-system requires gamma_gas, v_minus, v_plus > 0 (got {gamma_gas}, {v_minus}, {v_plus})"
        )));
    }
    if v_minus == v_plus {
        return Err(Error::NoAdmissibleShock("v_minus equals v_plus".into()));
    }
    let law = PSystem { gamma_gas };
    // s² (v₊ - v₋) = -(p(v₊) - p(v₋))
    let s2 = -(law.pressure(v_plus) - law.pressure(v_minus)) / (v_plus - v_minus);
    if !(s2 > 0.0) {
        return Err(Error::NoAdmissibleShock(format!(
            "s² = {s2} is not positive"
        )));
    }
    let law = Arc::new(law);
    for s in [s2.sqrt(), -s2.sqrt()] {
        let u_plus = -s * (v_plus - v_minus);
        let model = SystemModel {
            law: law.clone(),
            shock_speed: s,
            u_minus: DVector::from_vec(vec![v_minus, 0.0]),
            u_plus: DVector::from_vec(vec![v_plus, u_plus]),
        };
        if model.is_lax() {
            return Ok(model);
        }
    }
    Err(Error::NoAdmissibleShock(format!(
        "Lax inequalities fail for both signs of s = ±{}",
        s2.sqrt()
    )))
}

/// Characteristic data at one endstate, in the shock frame.
#[derive(Debug, Clone)]
pub struct EndstateData {
    pub side: Side,
    pub state: DVector<f64>,
    /// Sorted shock-frame speeds `a_1 < … < a_n`.
    pub speeds: Vec<f64>,
    /// Rows are the left eigenvectors `l_j`.
    pub left: DMatrix<f64>,
    /// Columns are the right eigenvectors `r_j`.
    pub right: DMatrix<f64>,
    /// `β_j = l_j · B r_j`.
    pub beta: Vec<f64>,
    /// `γ_j = l_j · d²F(r_j, r_j)`.
    pub gamma: Vec<f64>,
    /// `b_ij` with `B r_j = Σ_i b_ij r_i`, i.e. `L B R`.
    pub b: DMatrix<f64>,
    /// `Γ_ijk` flattened as `[(i * n + j) * n + k]`.
    pub big_gamma: Vec<f64>,
}

impl EndstateData {
    pub fn dim(&self) -> usize {
        self.speeds.len()
    }
    pub fn r(&self, j: usize) -> DVector<f64> {
        self.right.column(j).into_owned()
    }
    pub fn l(&self, j: usize) -> DVector<f64> {
        self.left.row(j).transpose()
    }
    pub fn coupling(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.dim();
        self.big_gamma[(i * n + j) * n + k]
    }
    /// Whether mode `j` leaves the shock on this side.
    pub fn is_outgoing(&self, j: usize) -> bool {
        match self.side {
            Side::Minus => self.speeds[j] < 0.0,
            Side::Plus => self.speeds[j] > 0.0,
        }
    }
}

/// Real, sorted, distinct eigenpairs of `a`, with `R` normalized as described
/// in the module docs and `L = R^{-1}`.
pub(crate) fn real_eigensystem(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let scale = a.amax().max(1.0);
    let eig = a.clone().complex_eigenvalues();
    let mut lambdas = Vec::with_capacity(n);
    for z in eig.iter() {
        if z.im.abs() > 1e-10 * scale {
            return Err(Error::ComplexOrRepeatedEigenvalues(
                eig.iter().map(|z| z.re).collect(),
            ));
        }
        lambdas.push(z.re);
    }
    lambdas.sort_by(|x, y| x.total_cmp(y));
    if lambdas
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() <= 1e-9 * scale)
    {
        return Err(Error::ComplexOrRepeatedEigenvalues(lambdas));
    }
    let mut right = DMatrix::zeros(n, n);
    for (j, &lambda) in lambdas.iter().enumerate() {
        let shifted = a - DMatrix::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("nonempty");
        let mut r: DVector<f64> = v_t.row(imin).transpose();
        let first = r
            .iter()
            .copied()
            .find(|c| c.abs() > 1e-12 * r.amax())
            .expect("eigenvector is nonzero");
        r /= first;
        right.set_column(j, &r);
    }
    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::ComplexOrRepeatedEigenvalues(lambdas.clone()))?;
    Ok((lambdas, left, right))
}

/// Characteristic data of `model` at state `u`, labelled as `side`.
pub fn endstate_data(model: &SystemModel, side: Side, u: &[f64]) -> Result<EndstateData> {
    let n = model.dim();
    let a = model.frame_jacobian(u);
    let (speeds, left, right) = real_eigensystem(&a)?;
    if let Some(&zero) = speeds.iter().find(|a| a.abs() < 1e-12) {
        return Err(Error::ZeroShockFrameSpeed {
            state: u.to_vec(),
            speed: zero,
        });
    }
    let visc = model.law.viscosity(u);
    let b = &left * &visc * &right;
    let beta: Vec<f64> = (0..n).map(|j| b[(j, j)]).collect();

    let mut big_gamma = vec![0.0; n * n * n];
    for j in 0..n {
        for k in 0..n {
            let rj = right.column(j).into_owned();
            let rk = right.column(k).into_owned();
            let g = model.law.hessian(u, rj.as_slice(), rk.as_slice());
            let coeffs = &left * g;
            for i in 0..n {
                big_gamma[(i * n + j) * n + k] = coeffs[i];
            }
        }
    }
    let gamma = (0..n).map(|j| big_gamma[(j * n + j) * n + j]).collect();

    Ok(EndstateData {
        side,
        state: DVector::from_column_slice(u),
        speeds,
        left,
        right,
        beta,
        gamma,
        b,
        big_gamma,
    })
}

/// A characteristic family leaving the shock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutgoingMode {
    pub side: Side,
    pub index: usize,
}

/// Modes with `a_j⁻ < 0` on the left and `a_j⁺ > 0` on the right.
pub fn outgoing_modes(minus: &EndstateData, plus: &EndstateData) -> Vec<OutgoingMode> {
    let mut modes = Vec::new();
    for (data, side) in [(minus, Side::Minus), (plus, Side::Plus)] {
        for j in 0..data.dim() {
            if data.is_outgoing(j) {
                modes.push(OutgoingMode { side, index: j });
            }
        }
    }
    modes
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn burgers_flux_and_derivatives() {
        let m = make_burgers();
        let mut f = [0.0];
        m.law.flux(&[1.0], &mut f);
        assert_eq!(f[0], 0.5);
        assert_eq!(m.law.jacobian(&[1.0])[(0, 0)], 1.0);
        assert_eq!(m.law.jacobian(&[-1.0])[(0, 0)], -1.0);
        for u in [-3.0, 0.0, 2.5] {
            assert_eq!(m.law.hessian(&[u], &[1.0], &[1.0])[0], 1.0);
        }
        assert!(m.is_lax());
    }

    #[test]
    fn burgers_endstate_data() {
        let m = make_burgers();
        let d = endstate_data(&m, Side::Plus, &[1.0]).unwrap();
        assert_eq!(d.speeds, vec![1.0]);
        assert_eq!(d.left[(0, 0)], 1.0);
        assert_eq!(d.right[(0, 0)], 1.0);
        assert_eq!(d.beta, vec![1.0]);
        assert_eq!(d.gamma, vec![1.0]);
    }

    #[test]
    fn psystem_shock_speed_and_lax_type() {
        let m = make_psystem(2.0, 1.0, 2.0).unwrap();
        let s = 3f64.sqrt() / 2.0;
        assert_relative_eq!(m.shock_speed, s, epsilon = 1e-14);
        assert_relative_eq!(m.u_plus[1] - m.u_minus[1], -s, epsilon = 1e-14);
        // lab-frame 2-characteristics bracket s
        let lab_minus = m.law.jacobian(m.u_minus.as_slice()).complex_eigenvalues();
        let a2_minus = lab_minus.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let lab_plus = m.law.jacobian(m.u_plus.as_slice()).complex_eigenvalues();
        let a2_plus = lab_plus.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert_relative_eq!(a2_plus, 0.5, epsilon = 1e-12);
        assert_relative_eq!(a2_minus, 2f64.sqrt(), epsilon = 1e-12);
        assert!(a2_plus < s && s < a2_minus);
        assert!(m.rankine_hugoniot_residual().amax() < 1e-12);
        assert_eq!(m.incoming_count().unwrap(), 3);
    }

    #[test]
    fn psystem_degenerate_states_rejected() {
        assert!(matches!(
            make_psystem(2.0, 1.0, 1.0),
            Err(Error::NoAdmissibleShock(_))
        ));
        assert!(matches!(
            make_psystem(2.0, -1.0, 1.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn psystem_endstate_data_at_unit_volume() {
        let law = Arc::new(PSystem { gamma_gas: 2.0 });
        let m = SystemModel {
            law,
            shock_speed: 0.0,
            u_minus: DVector::from_vec(vec![1.0, 0.0]),
            u_plus: DVector::from_vec(vec![1.0, 0.0]),
        };
        let d = endstate_data(&m, Side::Minus, &[1.0, 0.0]).unwrap();
        let r2 = 2f64.sqrt();
        assert_relative_eq!(d.speeds[0], -r2, epsilon = 1e-12);
        assert_relative_eq!(d.speeds[1], r2, epsilon = 1e-12);
        assert_relative_eq!(d.right[(0, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(d.right[(1, 1)], -r2, epsilon = 1e-12);
        assert_relative_eq!(d.gamma[1], -3.0 / r2, epsilon = 1e-12);
        assert_relative_eq!(d.beta[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(d.beta[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn outgoing_modes_of_presets() {
        let b = make_burgers();
        let bm = b.endstate_data(Side::Minus).unwrap();
        let bp = b.endstate_data(Side::Plus).unwrap();
        assert!(outgoing_modes(&bm, &bp).is_empty());

        let p = make_psystem(2.0, 1.0, 2.0).unwrap();
        let pm = p.endstate_data(Side::Minus).unwrap();
        let pp = p.endstate_data(Side::Plus).unwrap();
        assert_relative_eq!(
            pm.speeds[0],
            -2f64.sqrt() - 3f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
        assert_eq!(
            outgoing_modes(&pm, &pp),
            vec![OutgoingMode {
                side: Side::Minus,
                index: 0
            }]
        );
    }

    #[test]
    fn flipping_the_shock_swaps_outgoing_sides() {
        let p = make_psystem(2.0, 1.0, 2.0).unwrap();
        let mut minus = p.endstate_data(Side::Minus).unwrap();
        let mut plus = p.endstate_data(Side::Plus).unwrap();
        let before = outgoing_modes(&minus, &plus);
        // x -> -x: swap endstates and negate speeds
        std::mem::swap(&mut minus, &mut plus);
        minus.side = Side::Minus;
        plus.side = Side::Plus;
        for d in [&mut minus, &mut plus] {
            d.speeds.iter_mut().for_each(|a| *a = -*a);
        }
        let after = outgoing_modes(&minus, &plus);
        let mapped: Vec<_> = before
            .iter()
            .map(|m| OutgoingMode {
                side: m.side.flip(),
                index: m.index,
            })
            .collect();
        assert_eq!(after, mapped);
    }

    #[test]
    fn zero_frame_speed_is_rejected() {
        let m = SystemModel {
            shock_speed: 1.0,
            ..make_burgers()
        };
        assert!(matches!(
            endstate_data(&m, Side::Minus, &[1.0]),
            Err(Error::ZeroShockFrameSpeed { .. })
        ));
    }
}
