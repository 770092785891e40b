//! Envelope functions and Green's-function bounding kernels.
//!
//! All functions take shock-frame speeds. The indicator `χ(x, t)` is the
//! characteristic cone `[a_min t, a_max t]` spanned by the extreme speeds of
//! both endstates, which always contains the shock location `x = 0`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_sqrt_endpoints, QuadOptions};
use crate::systems::{outgoing_modes, EndstateData, OutgoingMode, Side, SystemModel};

/// `errfn(z) = π^{-1/2} ∫_{−∞}^z e^{−ξ²} dξ = (1 + erf z)/2`.
///
/// ```
/// use viscous_shock::templates::errfn;
/// assert_eq!(errfn(0.0), 0.5);
/// assert!((errfn(2.0) - 0.99766).abs() < 1e-5);
/// ```
pub fn errfn(z: f64) -> f64 {
    if z < 0.0 {
        0.5 * libm::erfc(-z)
    } else {
        1.0 - 0.5 * libm::erfc(z)
    }
}

fn errfn_density(z: f64) -> f64 {
    (-z * z).exp() / PI.sqrt()
}

/// An incoming mode whose mass is absorbed into the shift: speed pointing
/// toward the shock (stored as the speed seen from the left, i.e. > 0),
/// diffusion rate and the coefficient of `u₊ − u₋` in its eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitedMode {
    pub index: usize,
    pub speed: f64,
    pub beta: f64,
    pub weight: f64,
}

/// Characteristic data of one endstate as used by the templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSpeeds {
    pub speeds: Vec<f64>,
    pub beta: Vec<f64>,
    pub excited: Vec<ExcitedMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeContext {
    pub minus: SideSpeeds,
    pub plus: SideSpeeds,
    pub outgoing: Vec<OutgoingMode>,
    /// Bound constant `C`.
    pub c: f64,
    /// Gaussian widening `M`.
    pub m: f64,
    pub eta: f64,
    pub eta0: f64,
    /// Averaged hyperbolic speeds `ā_j` used by the H-kernel collapse.
    pub hyperbolic_speeds: Vec<f64>,
}

impl EnvelopeContext {
    /// Context for `model` with defaults `C = 1`, `M = 4 max β`,
    /// `η = η₀ = decay_rate / 2`.
    pub fn new(model: &SystemModel, decay_rate: f64) -> Result<Self> {
        let minus = model.endstate_data(Side::Minus)?;
        let plus = model.endstate_data(Side::Plus)?;
        let jump: Vec<f64> = (&model.u_plus - &model.u_minus).iter().copied().collect();
        Self::from_data(&minus, &plus, &jump, decay_rate)
    }

    pub fn from_data(
        minus: &EndstateData,
        plus: &EndstateData,
        jump: &[f64],
        decay_rate: f64,
    ) -> Result<Self> {
        if !(decay_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "decay rate must be positive, got {decay_rate}"
            )));
        }
        let outgoing = outgoing_modes(minus, plus);
        let weights = shift_weights(minus, plus, &outgoing, jump)?;
        let side = |d: &EndstateData, w: &[(Side, usize, f64)]| {
            let sign = if d.side == Side::Minus { 1.0 } else { -1.0 };
            SideSpeeds {
                speeds: d.speeds.clone(),
                beta: d.beta.clone(),
                excited: w
                    .iter()
                    .filter(|(s, _, _)| *s == d.side)
                    .map(|&(_, k, weight)| ExcitedMode {
                        index: k,
                        speed: sign * d.speeds[k],
                        beta: d.beta[k],
                        weight,
                    })
                    .collect(),
            }
        };
        let max_beta = minus
            .beta
            .iter()
            .chain(&plus.beta)
            .fold(0.0f64, |a, &b| a.max(b));
        Ok(Self {
            minus: side(minus, &weights),
            plus: side(plus, &weights),
            outgoing,
            c: 1.0,
            m: 4.0 * max_beta,
            eta: 0.5 * decay_rate,
            eta0: 0.5 * decay_rate,
            hyperbolic_speeds: minus.speeds.clone(),
        })
    }

    fn side(&self, side: Side) -> &SideSpeeds {
        match side {
            Side::Minus => &self.minus,
            Side::Plus => &self.plus,
        }
    }

    /// Shock-frame speeds of the outgoing modes.
    pub fn outgoing_speeds(&self) -> Vec<f64> {
        self.outgoing
            .iter()
            .map(|m| self.side(m.side).speeds[m.index])
            .collect()
    }

    /// Incoming speeds `(side, a)`: `a > 0` on the left, `a < 0` on the right.
    pub fn incoming_speeds(&self) -> Vec<(Side, f64)> {
        let left = self
            .minus
            .speeds
            .iter()
            .filter(|&&a| a > 0.0)
            .map(|&a| (Side::Minus, a));
        let right = self
            .plus
            .speeds
            .iter()
            .filter(|&&a| a < 0.0)
            .map(|&a| (Side::Plus, a));
        left.chain(right).collect()
    }

    /// `(a_min, a_max)` spanning the characteristic cone.
    pub fn cone(&self) -> (f64, f64) {
        let all = self.minus.speeds.iter().chain(&self.plus.speeds);
        let lo = all.clone().fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = all.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        (lo.min(0.0), hi.max(0.0))
    }

    /// Indicator of the cone, closed with a rounding-level slack so that
    /// points transported along an edge stay inside.
    pub fn chi(&self, x: f64, t: f64) -> f64 {
        let (lo, hi) = self.cone();
        let slack = 1e-10 * (1.0 + x.abs() + t);
        if x >= lo * t - slack && x <= hi * t + slack {
            1.0
        } else {
            0.0
        }
    }

    pub fn has_outgoing(&self) -> bool {
        !self.outgoing.is_empty()
    }

    /// Mirror image `x ↦ −x`: sides swapped and speeds negated.
    pub fn mirrored(&self) -> EnvelopeContext {
        let flip = |s: &SideSpeeds| {
            let n = s.speeds.len();
            SideSpeeds {
                speeds: s.speeds.iter().rev().map(|a| -a).collect(),
                beta: s.beta.iter().rev().copied().collect(),
                excited: s
                    .excited
                    .iter()
                    .map(|e| ExcitedMode {
                        index: n - 1 - e.index,
                        ..e.clone()
                    })
                    .collect(),
            }
        };
        let n = self.minus.speeds.len();
        EnvelopeContext {
            minus: flip(&self.plus),
            plus: flip(&self.minus),
            outgoing: self
                .outgoing
                .iter()
                .map(|m| OutgoingMode {
                    side: m.side.flip(),
                    index: n - 1 - m.index,
                })
                .collect(),
            hyperbolic_speeds: self.hyperbolic_speeds.iter().map(|a| -a).collect(),
            ..self.clone()
        }
    }
}

/// Coefficient of `u₊ − u₋` when each incoming eigenvector is expanded in
/// the basis {outgoing r_j} ∪ {u₊ − u₋}.
fn shift_weights(
    minus: &EndstateData,
    plus: &EndstateData,
    outgoing: &[OutgoingMode],
    jump: &[f64],
) -> Result<Vec<(Side, usize, f64)>> {
    let n = minus.dim();
    if outgoing.len() + 1 != n {
        return Err(Error::DegenerateBasis(0.0));
    }
    let mut basis = DMatrix::zeros(n, n);
    for (c, m) in outgoing.iter().enumerate() {
        let d = if m.side == Side::Minus { minus } else { plus };
        basis.set_column(c, &d.r(m.index));
    }
    for (i, v) in jump.iter().enumerate() {
        basis[(i, n - 1)] = *v;
    }
    let det = basis.determinant();
    let scale = basis.amax().powi(n as i32).max(1e-300);
    if det.abs() < 1e-10 * scale {
        return Err(Error::DegenerateBasis(det));
    }
    let lu = basis.lu();
    let mut out = Vec::new();
    for d in [minus, plus] {
        for k in 0..n {
            let incoming = if d.side == Side::Minus {
                d.speeds[k] > 0.0
            } else {
                d.speeds[k] < 0.0
            };
            if incoming {
                let c = lu.solve(&d.r(k)).ok_or(Error::DegenerateBasis(det))?;
                out.push((d.side, k, c[n - 1]));
            }
        }
    }
    Ok(out)
}

fn outgoing_sum<F: Fn(f64) -> f64>(ctx: &EnvelopeContext, f: F) -> f64 {
    ctx.outgoing_speeds().into_iter().map(f).sum()
}

pub fn psi1(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    let chi = ctx.chi(x, t);
    if chi == 0.0 {
        return 0.0;
    }
    let t13 = t.cbrt();
    (1.0 + t).powf(-0.5) * outgoing_sum(ctx, |a| (1.0 + (x - a * t).abs() + t13).powf(-0.75))
}

pub fn psi1_bar(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    let chi = ctx.chi(x, t);
    if chi == 0.0 {
        return 0.0;
    }
    (1.0 + t).powf(-0.5) * outgoing_sum(ctx, |a| (1.0 + (x - a * t).abs()).powf(-0.75))
}

pub fn psi2(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    let st = t.sqrt();
    outgoing_sum(ctx, |a| (1.0 + (x - a * t).abs() + st).powf(-1.5))
}

pub fn alpha_env(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    ctx.chi(x, t) * (1.0 + t).powf(-0.75) * (1.0 + x.abs()).powf(-0.5)
}

/// `ψ₁ + ψ₂ + α`.
pub fn envelope(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    psi1(ctx, x, t) + psi2(ctx, x, t) + alpha_env(ctx, x, t)
}

/// `t^{−1/2}(1+t)^{1/2}(ψ̄₁ + ψ₂ + α)`, the envelope for `v_x`.
pub fn derivative_envelope(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    (t.sqrt()).recip()
        * (1.0 + t).sqrt()
        * (psi1_bar(ctx, x, t) + psi2(ctx, x, t) + alpha_env(ctx, x, t))
}

/// Envelope used when no mode is outgoing (scalar shock): `α`, an
/// exponentially localized layer `(1+t)^{−3/4}e^{−η|x|}`, and incoming
/// transport terms `(1 + |x − a t| + t^{1/2})^{−3/2}` on the side each
/// incoming mode lives on.
pub fn fallback_envelope(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    let st = t.sqrt();
    let incoming: f64 = ctx
        .incoming_speeds()
        .into_iter()
        .filter(|(side, _)| (*side == Side::Minus) == (x <= 0.0))
        .map(|(_, a)| (1.0 + (x - a * t).abs() + st).powf(-1.5))
        .sum();
    alpha_env(ctx, x, t) + (1.0 + t).powf(-0.75) * (-ctx.eta * x.abs()).exp() + incoming
}

/// The envelope appropriate for `ctx`: the fallback is used iff the outgoing
/// set is empty.
pub fn pointwise_envelope(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    if ctx.has_outgoing() {
        envelope(ctx, x, t)
    } else {
        fallback_envelope(ctx, x, t)
    }
}

/// [`derivative_envelope`], or `t^{−1/2}(1+t)^{1/2}` times the fallback
/// when no mode is outgoing.
pub fn pointwise_derivative_envelope(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    if ctx.has_outgoing() {
        derivative_envelope(ctx, x, t)
    } else {
        t.sqrt().recip() * (1.0 + t).sqrt() * fallback_envelope(ctx, x, t)
    }
}

/// `ψ̄₁ + ψ₂ + α`, or the fallback when no mode is outgoing.
pub fn bootstrap_envelope(ctx: &EnvelopeContext, x: f64, t: f64) -> f64 {
    if ctx.has_outgoing() {
        psi1_bar(ctx, x, t) + psi2(ctx, x, t) + alpha_env(ctx, x, t)
    } else {
        fallback_envelope(ctx, x, t)
    }
}

/// `e(y, t)` with its `t`, `y` and mixed derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitedJet {
    pub value: f64,
    pub dt: f64,
    pub dy: f64,
    pub dyt: f64,
}

/// The excited kernel `e(y, t)` (single shift direction), evaluated on the
/// side of the shock that contains `y`.
pub fn excited_e(ctx: &EnvelopeContext, y: f64, t: f64) -> ExcitedJet {
    if y > 0.0 {
        let mut j = excited_e(&ctx.mirrored(), -y, t);
        j.dy = -j.dy;
        j.dyt = -j.dyt;
        return j;
    }
    let mut out = ExcitedJet {
        value: 0.0,
        dt: 0.0,
        dy: 0.0,
        dyt: 0.0,
    };
    if !(t > 0.0) {
        return out;
    }
    for e in &ctx.minus.excited {
        let (a, w) = (e.speed, e.weight);
        let s = (4.0 * e.beta * t).sqrt();
        let z1 = (y + a * t) / s;
        let z2 = (y - a * t) / s;
        let (g1, g2) = (errfn_density(z1), errfn_density(z2));
        // dz/dt
        let dz1 = (a * t - y) / (2.0 * t * s);
        let dz2 = (-a * t - y) / (2.0 * t * s);
        out.value += w * (errfn(z1) - errfn(z2));
        out.dt += w * (g1 * dz1 - g2 * dz2);
        out.dy += w * (g1 - g2) / s;
        // d/dt [g(z)/s] = g(z)(−2z dz/dt)/s − g(z)/(2 t s)
        let d1 = g1 * (-2.0 * z1 * dz1) / s - g1 / (2.0 * t * s);
        let d2 = g2 * (-2.0 * z2 * dz2) / s - g2 / (2.0 * t * s);
        out.dyt += w * (d1 - d2);
    }
    out
}

/// Bounding values `(|e|, |e_t|, |e_y|, |e_yt|)` with constants `C`, `M`.
pub fn excited_bounds(ctx: &EnvelopeContext, y: f64, t: f64) -> [f64; 4] {
    if y > 0.0 {
        return excited_bounds(&ctx.mirrored(), -y, t);
    }
    if !(t > 0.0) {
        return [0.0; 4];
    }
    let mut value = 0.0;
    let mut gauss = 0.0;
    for e in &ctx.minus.excited {
        let s = (4.0 * e.beta * t).sqrt();
        value += errfn((y + e.speed * t) / s) - errfn((y - e.speed * t) / s);
        gauss += (-(y + e.speed * t).powi(2) / (ctx.m * t)).exp();
    }
    let c = ctx.c;
    [
        c * value,
        c * gauss / t.sqrt(),
        c * gauss / t.sqrt(),
        c * gauss / t,
    ]
}

/// Derivative order of the G̃ bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeOrder {
    None,
    X,
    Y,
}

/// The three kernel families of the G̃ bound, evaluated separately.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelTerms {
    pub convection: f64,
    pub reflection: f64,
    pub transmission: f64,
}

impl KernelTerms {
    pub fn total(&self) -> f64 {
        self.convection + self.reflection + self.transmission
    }
}

/// Convection, reflection and transmission kernels (without the time
/// factor and `C`) for a source at `y`.
pub fn gtilde_terms(ctx: &EnvelopeContext, x: f64, t: f64, y: f64) -> KernelTerms {
    if y > 0.0 {
        return gtilde_terms(&ctx.mirrored(), -x, t, -y);
    }
    let mut out = KernelTerms::default();
    if !(t > 0.0) {
        return out;
    }
    let m = ctx.m;
    let g = |z: f64| t.powf(-0.5) * (-(z * z) / (m * t)).exp();
    let cut_plus = (-ctx.eta * x.max(0.0)).exp();
    let cut_minus = (-ctx.eta * (-x).max(0.0)).exp();
    for &a in &ctx.minus.speeds {
        out.convection += g(x - y - a * t) * cut_plus;
    }
    for &ak in ctx.minus.speeds.iter().filter(|&&a| a > 0.0) {
        if (ak * t).abs() < y.abs() {
            continue;
        }
        let remaining = t - (y / ak).abs();
        for &aj in ctx.minus.speeds.iter().filter(|&&a| a < 0.0) {
            out.reflection += g(x - aj * remaining) * cut_plus;
        }
        for &aj in ctx.plus.speeds.iter().filter(|&&a| a > 0.0) {
            out.transmission += g(x - aj * remaining) * cut_minus;
        }
    }
    out
}

/// `C (t^{−|α|/2} + |α_x| e^{−η|x|}) × (convection + reflection + transmission)`.
pub fn gtilde_bound(ctx: &EnvelopeContext, order: DerivativeOrder, x: f64, t: f64, y: f64) -> f64 {
    let factor = match order {
        DerivativeOrder::None => 1.0,
        DerivativeOrder::X => t.powf(-0.5) + (-ctx.eta * x.abs()).exp(),
        DerivativeOrder::Y => t.powf(-0.5),
    };
    ctx.c * factor * gtilde_terms(ctx, x, t, y).total()
}

/// `Σ_j e^{−η₀ t} |v(x − ā_j t)|`: the H kernel applied to data at a single
/// time, its δ-mass transported along the averaged characteristics.
pub fn hkernel_apply<F: Fn(f64) -> f64>(ctx: &EnvelopeContext, v: F, x: f64, t: f64) -> f64 {
    let decay = (-ctx.eta0 * t).exp();
    ctx.hyperbolic_speeds
        .iter()
        .map(|a| decay * v(x - a * t).abs())
        .sum()
}

/// `Σ_j ∫₀ᵗ e^{−η₀(t−s)} |w(x − ā_j (t−s), s)| ds` by adaptive quadrature
/// (endpoint substitutions absorb `s^{−1/2}`-type factors of `w`).
pub fn hkernel_time_integral<F: Fn(f64, f64) -> f64>(
    ctx: &EnvelopeContext,
    weight: F,
    x: f64,
    t: f64,
    opts: QuadOptions,
) -> Result<f64> {
    if !(t > 0.0) {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &a in &ctx.hyperbolic_speeds {
        let f = |s: f64| (-ctx.eta0 * (t - s)).exp() * weight(x - a * (t - s), s).abs();
        // breakpoint where the transported point crosses the shock
        let bp = if a != 0.0 { vec![t - x / a] } else { vec![] };
        total += integrate_sqrt_endpoints(f, 0.0, t, &bp, opts)?.value;
    }
    Ok(total)
}
