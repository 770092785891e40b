//! Checks of the predicted large-time behaviour on computed residuals:
//! pointwise envelope ratios, `L^p` decay exponents and shift decay.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::ShiftTrack;
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::mesh::NodeField;
use crate::profile::least_squares_line;
use crate::templates::{
    bootstrap_envelope, pointwise_derivative_envelope, pointwise_envelope, EnvelopeContext,
};

/// Fits use snapshots with `t ≥ FIT_START`.
pub const FIT_START: f64 = 10.0;
pub const MIN_FIT_POINTS: usize = 8;
/// Envelope values below this are excluded from ratios.
pub const ENVELOPE_FLOOR: f64 = 1e-12;

/// `y ≈ C (1+t)^slope` by least squares in log–log coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub log_constant: f64,
    /// Half-width of the 95% interval for the slope (normal approximation).
    pub ci95: f64,
    pub points: usize,
}

/// Fits `values` against `(1+t)` over `t ∈ [t_min, ∞)`.
pub fn fit_power(times: &[f64], values: &[f64], t_min: f64) -> Result<PowerFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_min)
        .map(|(t, v)| ((1.0 + t).ln(), v.ln()))
        .unzip();
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidParameter(format!(
            "{} snapshots in the fit window, need {MIN_FIT_POINTS}",
            x.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NormAtNoiseFloor);
    }
    let (slope, intercept) = least_squares_line(&x, &y);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sse: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    Ok(PowerFit {
        slope,
        log_constant: intercept,
        ci95: 1.96 * se,
        points: x.len(),
    })
}

/// Per-snapshot sup ratio of a field to an envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSeries {
    pub times: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Sup of the envelope over the mesh, per snapshot.
    pub envelope_sup: Vec<f64>,
    /// The scalar fallback envelope was used.
    pub fallback: bool,
}

impl RatioSeries {
    pub fn max(&self) -> f64 {
        self.ratio.iter().copied().fold(0.0, f64::max)
    }

    /// Log-slope of the ratio over the fit window; `None` when the ratio is
    /// identically zero there.
    pub fn log_slope(&self) -> Result<Option<PowerFit>> {
        let window: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.ratio)
            .filter(|(t, _)| **t >= FIT_START)
            .map(|(t, r)| (*t, *r))
            .collect();
        if window.iter().all(|(_, r)| *r == 0.0) {
            return Ok(None);
        }
        let (t, r): (Vec<f64>, Vec<f64>) = window.into_iter().unzip();
        fit_power(&t, &r, FIT_START).map(Some)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,ratio,envelope_sup")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e}",
                self.times[k], self.ratio[k], self.envelope_sup[k]
            )?;
        }
        Ok(())
    }
}

fn ratio_series(
    v: &Trajectory,
    ctx: &EnvelopeContext,
    t_min: f64,
    field: impl Fn(&NodeField) -> Vec<f64> + Sync,
    env: impl Fn(&EnvelopeContext, f64, f64) -> f64 + Sync,
) -> Result<RatioSeries> {
    let idx: Vec<usize> = (0..v.len()).filter(|&k| v.times[k] >= t_min).collect();
    let rows: Vec<(f64, f64, f64)> = idx
        .par_iter()
        .map(|&k| {
            let t = v.times[k];
            let mag = field(&v.fields[k]);
            let vmax = mag.iter().copied().fold(0.0, f64::max);
            let (mut ratio, mut sup): (f64, f64) = (0.0, 0.0);
            for (i, x) in v.mesh.points().enumerate() {
                let e = env(ctx, x, t);
                sup = sup.max(e);
                if e > ENVELOPE_FLOOR {
                    ratio = ratio.max(mag[i] / e);
                } else if mag[i] > 1e-8 * vmax && mag[i] > 1e-14 {
                    return Err(Error::EnvelopeVanishes(format!("x = {x}, t = {t}")));
                }
            }
            Ok((t, ratio, sup))
        })
        .collect::<Result<_>>()?;
    Ok(RatioSeries {
        times: rows.iter().map(|r| r.0).collect(),
        ratio: rows.iter().map(|r| r.1).collect(),
        envelope_sup: rows.iter().map(|r| r.2).collect(),
        fallback: !ctx.has_outgoing(),
    })
}

/// `ρ(t) = sup_x |v(x,t)| / (ψ₁+ψ₂+α)(x,t)` (fallback envelope when the
/// outgoing set is empty).
pub fn pointwise_ratio(v: &Trajectory, ctx: &EnvelopeContext) -> Result<RatioSeries> {
    ratio_series(v, ctx, 0.0, NodeField::pointwise_norm, pointwise_envelope)
}

/// Centered-difference `|v_x|` per node (one-sided at the ends).
pub fn slope_magnitude(v: &NodeField, h: f64) -> Vec<f64> {
    let n = v.dim;
    let nodes = v.nodes();
    (0..nodes)
        .map(|i| {
            let (a, b, w) = match i {
                0 => (0, 1, h),
                i if i == nodes - 1 => (i - 1, i, h),
                i => (i - 1, i + 1, 2.0 * h),
            };
            (0..n)
                .map(|c| ((v.node(b)[c] - v.node(a)[c]) / w).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Sup ratio of `|v_x|` to `t^{−1/2}(1+t)^{1/2}(ψ̄₁+ψ₂+α)` for `t ≥ 0.5`.
pub fn derivative_envelope_check(v: &Trajectory, ctx: &EnvelopeContext) -> Result<RatioSeries> {
    let h = v.mesh.spacing();
    ratio_series(
        v,
        ctx,
        0.5,
        |f| slope_magnitude(f, h),
        pointwise_derivative_envelope,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::LInf];

    /// Predicted exponent `−(1/2)(1 − 1/p) − 1/4`.
    pub fn prediction(self) -> f64 {
        match self {
            Norm::L1 => -0.25,
            Norm::L2 => -0.5,
            Norm::LInf => -0.75,
        }
    }

    pub fn eval(self, v: &NodeField, h: f64) -> f64 {
        let mag = v.pointwise_norm();
        match self {
            Norm::L1 => crate::quadrature::trapezoid(&mag, h),
            Norm::L2 => {
                let sq: Vec<f64> = mag.iter().map(|m| m * m).collect();
                crate::quadrature::trapezoid(&sq, h).sqrt()
            }
            Norm::LInf => mag.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub norm: Norm,
    pub norms: Vec<f64>,
    pub fit: PowerFit,
    pub prediction: f64,
    /// Upper-bound semantics: `slope ≤ prediction + tolerance`.
    pub tolerance: f64,
    pub pass: bool,
}

/// Norm series below this fraction of their maximum count as noise.
pub const NORM_NOISE: f64 = 1e-11;

/// Fitted `L^p` exponents of `v` for `p ∈ {1, 2, ∞}` against the residual
/// predictions.
pub fn lp_rates(v: &Trajectory) -> Result<Vec<RateCheck>> {
    lp_rates_against(v, |n| n.prediction())
}

/// As [`lp_rates`] with custom predictions (e.g. `−1/2` for the unshifted
/// residual when `p ≥ 2`).
pub fn lp_rates_against(
    v: &Trajectory,
    prediction: impl Fn(Norm) -> f64,
) -> Result<Vec<RateCheck>> {
    let h = v.mesh.spacing();
    Norm::ALL
        .iter()
        .map(|&norm| {
            let norms: Vec<f64> = v.fields.iter().map(|f| norm.eval(f, h)).collect();
            let top = norms.iter().copied().fold(0.0, f64::max);
            let in_window = v.times.iter().zip(&norms).filter(|(t, _)| **t >= FIT_START);
            if top == 0.0 || in_window.clone().any(|(_, n)| *n <= NORM_NOISE * top) {
                return Err(Error::NormAtNoiseFloor);
            }
            let fit = fit_power(&v.times, &norms, FIT_START)?;
            let p = prediction(norm);
            Ok(RateCheck {
                norm,
                pass: fit.slope <= p + 0.1,
                norms,
                fit,
                prediction: p,
                tolerance: 0.1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRates {
    pub delta: Option<PowerFit>,
    pub delta_dot: Option<PowerFit>,
    /// `max |δ(t)| (1+t)^{1/2}` over the track.
    pub delta_constant: f64,
    pub delta_dot_constant: f64,
    pub at_noise_floor: bool,
    pub pass: bool,
}

/// Shift magnitudes below this are tracker noise.
pub const SHIFT_NOISE: f64 = 1e-8;

/// Fitted slopes of `|δ|` and `|δ̇|`; pass if `≤ −1/2 + 0.1` and
/// `≤ −1 + 0.15`, or if the track is at noise level.
pub fn shift_rates(track: &ShiftTrack) -> Result<ShiftRates> {
    let window = |k: &usize| track.times[*k] >= FIT_START;
    let idx: Vec<usize> = (0..track.times.len()).filter(window).collect();
    let delta_constant = track
        .times
        .iter()
        .zip(&track.delta)
        .map(|(t, d)| d.abs() * (1.0 + t).sqrt())
        .fold(0.0, f64::max);
    let delta_dot_constant = track
        .times
        .iter()
        .zip(&track.delta_dot)
        .map(|(t, d)| d.abs() * (1.0 + t))
        .fold(0.0, f64::max);
    let quiet = idx.iter().all(|&k| track.delta[k].abs() < SHIFT_NOISE);
    if quiet {
        return Ok(ShiftRates {
            delta: None,
            delta_dot: None,
            delta_constant,
            delta_dot_constant,
            at_noise_floor: true,
            pass: true,
        });
    }
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    let fd = fit_power(&track.times, &abs(&track.delta), FIT_START)?;
    let fdd = fit_power(&track.times, &abs(&track.delta_dot), FIT_START).ok();
    let pass = fd.slope <= -0.5 + 0.1 && fdd.as_ref().is_none_or(|f| f.slope <= -1.0 + 0.15);
    Ok(ShiftRates {
        delta: Some(fd),
        delta_dot: fdd,
        delta_constant,
        delta_dot_constant,
        at_noise_floor: false,
        pass,
    })
}

/// Running-sup diagnostic
/// `ζ(t) = sup |v|/(ψ̄₁+ψ₂+α) + sup |v_x|/(t^{−1/2}(1+t)^{1/2}(ψ̄₁+ψ₂+α))
///        + sup |δ|(1+s)^{1/2} + sup |δ̇|(1+s)`, sups over `s ≤ t`; the
/// derivative term starts at `t = 0.5`.
pub fn zeta_series(v: &Trajectory, track: &ShiftTrack, ctx: &EnvelopeContext) -> Result<Vec<f64>> {
    let value = ratio_series(v, ctx, 0.0, NodeField::pointwise_norm, bootstrap_envelope)?;
    let slope = derivative_envelope_check(v, ctx)?;
    let mut out = Vec::with_capacity(v.len());
    let (mut a, mut b, mut c, mut d): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..v.len() {
        let t = v.times[k];
        a = a.max(value.ratio[k]);
        if let Some(j) = slope.times.iter().position(|s| *s == t) {
            b = b.max(slope.ratio[j]);
        }
        c = c.max(track.delta[k].abs() * (1.0 + t).sqrt());
        d = d.max(track.delta_dot[k].abs() * (1.0 + t));
        out.push(a + b + c + d);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub label: String,
    pub initial_size: f64,
    pub pointwise: RatioSeries,
    pub pointwise_slope: Option<PowerFit>,
    pub pointwise_pass: bool,
    pub derivative: RatioSeries,
    pub derivative_slope: Option<PowerFit>,
    pub derivative_pass: bool,
    pub rates: Vec<RateCheck>,
    /// Residual without the shift, checked against `−1/2` for `p ≥ 2`.
    pub unshifted_rates: Vec<RateCheck>,
    pub shift: ShiftRates,
    pub zeta: Vec<f64>,
    /// `‖v‖_∞ ≤ max ρ · sup(ψ₁+ψ₂+α)` at every snapshot.
    pub hierarchy_consistent: bool,
    pub pass: bool,
}

/// Ratio bounded with log-slope `≤ 0.05` over the fit window.
fn bounded(series: &RatioSeries) -> Result<(Option<PowerFit>, bool)> {
    let fit = series.log_slope()?;
    let finite = series.ratio.iter().all(|r| r.is_finite());
    let ok = finite && fit.as_ref().is_none_or(|f| f.slope <= 0.05);
    Ok((fit, ok))
}

/// Runs every check on the `theorem` residual `v`, the unshifted
/// variant and the shift track.
pub fn verify(
    label: &str,
    v: &Trajectory,
    unshifted: &Trajectory,
    track: &ShiftTrack,
    ctx: &EnvelopeContext,
    initial_size: f64,
) -> Result<VerificationReport> {
    let pointwise = pointwise_ratio(v, ctx)?;
    let (pointwise_slope, pointwise_pass) = bounded(&pointwise)?;
    let derivative = derivative_envelope_check(v, ctx)?;
    let (derivative_slope, derivative_pass) = bounded(&derivative)?;
    let rates = lp_rates(v)?;
    let unshifted_rates = lp_rates_against(unshifted, |n| match n {
        Norm::L1 => Norm::L1.prediction(),
        _ => -0.5,
    })?;
    let shift = shift_rates(track)?;
    let zeta = zeta_series(v, track, ctx)?;
    let rmax = pointwise.max();
    let hierarchy_consistent = v
        .fields
        .iter()
        .zip(&pointwise.envelope_sup)
        .all(|(f, sup)| {
            let vinf = Norm::LInf.eval(f, 1.0);
            vinf <= rmax * sup * (1.0 + 1e-12) + 1e-300
        });
    let pass = pointwise_pass
        && derivative_pass
        && rates.iter().all(|r| r.pass)
        && unshifted_rates.iter().skip(1).all(|r| r.pass)
        && shift.pass;
    Ok(VerificationReport {
        label: label.to_string(),
        initial_size,
        pointwise,
        pointwise_slope,
        pointwise_pass,
        derivative,
        derivative_slope,
        derivative_pass,
        rates,
        unshifted_rates,
        shift,
        zeta,
        hierarchy_consistent,
        pass,
    })
}

impl VerificationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_fit_recovers_exponent() {
        let t: Vec<f64> = (0..20).map(|k| 2f64.powf(k as f64 / 2.0)).collect();
        let v: Vec<f64> = t.iter().map(|s| 3.0 * (1.0 + s).powf(-0.6)).collect();
        let f = fit_power(&t, &v, 10.0).unwrap();
        assert!((f.slope + 0.6).abs() < 1e-12);
        assert!(f.ci95 < 1e-10);
        assert!(fit_power(&t[..10], &v[..10], 10.0).is_err());
    }

    #[test]
    fn predictions_follow_the_formula() {
        for (n, p) in [
            (Norm::L1, 1.0),
            (Norm::L2, 2.0),
            (Norm::LInf, f64::INFINITY),
        ] {
            let formula = -0.5 * (1.0 - 1.0 / p) - 0.25;
            assert!((n.prediction() - formula).abs() < 1e-15);
        }
    }

    #[test]
    fn slope_magnitude_of_a_line() {
        let v = NodeField::from_fn(2, 11, |i, o| {
            o[0] = 3.0 * i as f64 * 0.1;
            o[1] = -4.0 * i as f64 * 0.1;
        });
        assert!(slope_magnitude(&v, 0.1)
            .iter()
            .all(|s| (s - 5.0).abs() < 1e-12));
    }

    #[test]
    fn constant_shift_fails() {
        let t: Vec<f64> = std::iter::once(0.0)
            .chain((-2..20).map(|k| 2f64.powf(k as f64 / 2.0)))
            .collect();
        let tr = ShiftTrack::from_samples(t.clone(), vec![0.01; t.len()]);
        let r = shift_rates(&tr).unwrap();
        assert!(!r.pass && !r.at_noise_floor);
        assert!(r.delta.unwrap().slope.abs() < 1e-10);
    }
}
