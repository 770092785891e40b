//! Self-similar diffusion waves of the viscous Burgers equation
//! `φ_t + a φ_x − β φ_xx = −γ (φ²)_x`, issued from a point mass at `t = −1`.
//!
//! With `τ = t + 1`, `ξ = x − aτ` and `w = 2γφ` the equation becomes
//! `w_τ + w w_ξ = β w_ξξ`; the Hopf–Cole substitution `w = −2β ∂_ξ log θ`
//! with `θ = 1 + K erfc(z)/2`, `z = ξ/√(4βτ)`, `K = e^{γm/β} − 1` yields
//!
//! ```text
//! φ = m E e^{−z²} / (√(4πβτ) D(z)),   D = 1 + K erfc(z)/2,   E = K/(γm/β)
//! ```
//!
//! which reduces to the convected heat kernel when `γ = 0` (`E = 1`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{EndstateData, OutgoingMode, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionWave {
    pub mass: f64,
    /// Shock-frame characteristic speed.
    pub speed: f64,
    pub beta: f64,
    pub gamma: f64,
    pub direction: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<OutgoingMode>,
}

/// Value and first derivatives of a wave at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveJet {
    pub value: f64,
    pub dx: f64,
    pub dxx: f64,
    pub dt: f64,
}

impl DiffusionWave {
    pub fn scalar(mass: f64, speed: f64, beta: f64, gamma: f64) -> Self {
        Self {
            mass,
            speed,
            beta,
            gamma,
            direction: vec![1.0],
            mode: None,
        }
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::NonpositiveBeta(self.beta));
        }
        if !(t >= 0.0) {
            return Err(Error::NonpositiveTime(t));
        }
        Ok(())
    }

    /// `γm/β`, `K = expm1(g)` and `E = K/g`.
    fn nonlinearity(&self) -> (f64, f64) {
        let g = self.gamma * self.mass / self.beta;
        let k = g.exp_m1();
        let e = if g.abs() < 1e-12 {
            1.0 + 0.5 * g
        } else {
            k / g
        };
        (k, e)
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.jet(x, t)?.value)
    }

    /// Value, `φ_x`, `φ_xx` and `φ_t` from the closed form.
    pub fn jet(&self, x: f64, t: f64) -> Result<WaveJet> {
        self.check(t)?;
        let tau = t + 1.0;
        let (k, e) = self.nonlinearity();
        let width = (4.0 * self.beta * tau).sqrt();
        let z = (x - self.speed * tau) / width;
        let gauss = (-z * z).exp();
        let d = 1.0 + 0.5 * k * libm::erfc(z);
        let p = gauss / d;
        let c = self.mass * e / (PI.sqrt() * width);
        let sq = k * p / PI.sqrt();
        let q = -2.0 * z + sq;
        let dq = -2.0 + sq * q;
        let dp = p * q;
        let ddp = p * (q * q + dq);
        let value = c * p;
        let dx = c * dp / width;
        let dxx = c * ddp / (width * width);
        let dt = -value / (2.0 * tau) - z * c * dp / (2.0 * tau) - self.speed * dx;
        Ok(WaveJet { value, dx, dxx, dt })
    }

    /// `φ_t + a φ_x − β φ_xx + γ (φ²)_x`, zero up to rounding.
    pub fn pde_residual(&self, x: f64, t: f64) -> Result<f64> {
        let j = self.jet(x, t)?;
        Ok(j.dt + self.speed * j.dx - self.beta * j.dxx + 2.0 * self.gamma * j.value * j.dx)
    }

    /// `(φ_x, φ_t)`.
    pub fn derivatives(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        let j = self.jet(x, t)?;
        Ok((j.dx, j.dt))
    }

    /// Centre `aτ` and standard width `√(2βτ)` of the wave at time `t`.
    pub fn center_and_width(&self, t: f64) -> (f64, f64) {
        let tau = t + 1.0;
        (self.speed * tau, (2.0 * self.beta * tau).sqrt())
    }
}

pub fn eval_wave(w: &DiffusionWave, x: f64, t: f64) -> Result<f64> {
    w.eval(x, t)
}

pub fn wave_derivatives(w: &DiffusionWave, x: f64, t: f64) -> Result<(f64, f64)> {
    w.derivatives(x, t)
}

/// The ansatz `φ = Σ φ_j r_j` over outgoing modes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionWaveSet {
    pub dim: usize,
    pub waves: Vec<DiffusionWave>,
}

impl DiffusionWaveSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            waves: Vec::new(),
        }
    }

    /// One wave per outgoing mode, with mass from `masses` (same order as
    /// `modes`).
    pub fn from_modes(
        minus: &EndstateData,
        plus: &EndstateData,
        modes: &[OutgoingMode],
        masses: &[f64],
    ) -> Result<Self> {
        if modes.len() != masses.len() {
            return Err(Error::InvalidParameter(format!(
                "{} outgoing modes but {} masses",
                modes.len(),
                masses.len()
            )));
        }
        let waves = modes
            .iter()
            .zip(masses)
            .map(|(mode, &mass)| {
                let data = match mode.side {
                    Side::Minus => minus,
                    Side::Plus => plus,
                };
                let j = mode.index;
                DiffusionWave {
                    mass,
                    speed: data.speeds[j],
                    beta: data.beta[j],
                    gamma: data.gamma[j],
                    direction: data.r(j).as_slice().to_vec(),
                    mode: Some(*mode),
                }
            })
            .collect();
        Ok(Self {
            dim: minus.dim(),
            waves,
        })
    }

    pub fn eval(&self, x: f64, t: f64, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        if !(t >= 0.0) {
            return Err(Error::NonpositiveTime(t));
        }
        for w in &self.waves {
            let v = w.eval(x, t)?;
            for (o, r) in out.iter_mut().zip(&w.direction) {
                *o += v * r;
            }
        }
        Ok(())
    }

    /// `(φ, φ_x, φ_xx, φ_t)` of the composite, each in ℝⁿ.
    pub fn jets(&self, x: f64, t: f64) -> Result<[Vec<f64>; 4]> {
        let mut out = [
            vec![0.0; self.dim],
            vec![0.0; self.dim],
            vec![0.0; self.dim],
            vec![0.0; self.dim],
        ];
        for w in &self.waves {
            let j = w.jet(x, t)?;
            for (c, r) in w.direction.iter().enumerate() {
                out[0][c] += j.value * r;
                out[1][c] += j.dx * r;
                out[2][c] += j.dxx * r;
                out[3][c] += j.dt * r;
            }
        }
        Ok(out)
    }
}

pub fn eval_composite(set: &DiffusionWaveSet, x: f64, t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; set.dim];
    set.eval(x, t, &mut out)?;
    Ok(out)
}
