//! Experiment configuration and the end-to-end run: profile, waves,
//! evolution, decomposition and verification, plus the artifacts a run
//! leaves on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decomposition::{
    assemble_residual, decompose_initial, refine_decomposition, track_trajectory, tracking_window,
    MassDecomposition, ShiftTrack,
};
use crate::error::{Error, Result};
use crate::evolution::{
    evolve_nonlinear, stable_dt, step_limits, DiscreteProfile, EvolveOptions, FluxKind, GridField,
    Trajectory,
};
use crate::mesh::{Mesh, NodeField};
use crate::profile::{solve_profile, ShockProfile};
use crate::systems::{make_burgers, make_psystem, outgoing_modes, Side, SystemModel};
use crate::templates::{bootstrap_envelope, EnvelopeContext};
use crate::verification::{lp_rates, verify, Norm, PowerFit, VerificationReport, FIT_START};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Burgers,
    Psystem {
        gamma: f64,
        v_minus: f64,
        v_plus: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<SystemModel> {
        match *self {
            ModelSpec::Burgers => Ok(make_burgers()),
            ModelSpec::Psystem {
                gamma,
                v_minus,
                v_plus,
            } => make_psystem(gamma, v_minus, v_plus),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `exp(−z²/2w²)`.
    Gaussian,
    /// `(g(z) − g(z − w)) / (1 + 2^{3/2})` with `g = (1+|z|)^{−3/2}`.
    Dipole,
    /// `(1+|z|)^{−3/2}`.
    Algebraic,
    /// `ū(x + a) − ū(x)`; `center`, `width`, `direction` are ignored.
    ShiftedProfile,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub shape: Shape,
    /// `E₀` (the shift for `shifted_profile`).
    pub amplitude: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub width: f64,
    /// State-space direction; defaults to the first unit vector.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    /// Beyond `|z| > cutoff` the shape is tapered by a Gaussian.
    #[serde(default)]
    pub cutoff: Option<f64>,
}

impl PerturbationSpec {
    fn scalar(&self, x: f64) -> f64 {
        let z = x - self.center;
        let g = |z: f64| (1.0 + z.abs()).powf(-1.5);
        let v = match self.shape {
            Shape::Gaussian => (-z * z / (2.0 * self.width * self.width)).exp(),
            Shape::Dipole => (g(z) - g(z - self.width)) / (1.0 + 2f64.powf(1.5)),
            Shape::Algebraic => g(z),
            Shape::ShiftedProfile => 0.0,
        };
        match self.cutoff {
            Some(c) if z.abs() > c => v * (-((z.abs() - c) / (0.05 * c)).powi(2)).exp(),
            _ => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// Half-width `X` and node count `N` of the profile solve.
    pub profile_halfwidth: f64,
    pub profile_nodes: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub spacing: f64,
    /// Spacing of a second, coarser run whose fits are compared.
    #[serde(default)]
    pub compare_spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_end: f64,
    /// Defaults to the stable step of the mesh.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub flux: FluxKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed change of each fitted exponent between the two meshes.
    pub mesh_fit_change: f64,
    /// Allowed mass drift relative to `‖ũ₀ − ū‖_{L¹}`.
    pub mass_drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mesh_fit_change: 0.02,
            mass_drift: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub label: String,
    pub model: ModelSpec,
    pub perturbation: Vec<PerturbationSpec>,
    pub mesh: MeshSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub verification: Tolerances,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub const PRESETS: [&str; 2] = ["burgers", "psystem"];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "burgers" => Ok(Self {
                label: "burgers".into(),
                model: ModelSpec::Burgers,
                perturbation: vec![
                    PerturbationSpec {
                        shape: Shape::Algebraic,
                        amplitude: 0.005,
                        center: -5.0,
                        width: 1.0,
                        direction: None,
                        cutoff: Some(1100.0),
                    },
                    PerturbationSpec {
                        shape: Shape::Dipole,
                        amplitude: 0.005,
                        center: 8.0,
                        width: 1.0,
                        direction: None,
                        cutoff: Some(1100.0),
                    },
                ],
                mesh: MeshSpec {
                    profile_halfwidth: 40.0,
                    profile_nodes: 8001,
                    x_min: -1300.0,
                    x_max: 1300.0,
                    spacing: 0.2,
                    compare_spacing: None,
                },
                time: TimeSpec {
                    t_end: 1000.0,
                    dt: None,
                    flux: FluxKind::Centered,
                },
                verification: Tolerances::default(),
                output: None,
            }),
            "psystem" => Ok(Self {
                label: "psystem".into(),
                model: ModelSpec::Psystem {
                    gamma: 2.0,
                    v_minus: 1.0,
                    v_plus: 2.0,
                },
                perturbation: vec![
                    PerturbationSpec {
                        shape: Shape::Algebraic,
                        amplitude: 0.005,
                        center: -10.0,
                        width: 1.0,
                        direction: Some(vec![1.0, 0.5]),
                        cutoff: Some(300.0),
                    },
                    PerturbationSpec {
                        shape: Shape::Dipole,
                        amplitude: 0.005,
                        center: 5.0,
                        width: 1.0,
                        direction: Some(vec![0.0, 1.0]),
                        cutoff: Some(300.0),
                    },
                ],
                mesh: MeshSpec {
                    profile_halfwidth: 60.0,
                    profile_nodes: 12001,
                    x_min: -3000.0,
                    x_max: 400.0,
                    spacing: 0.2,
                    compare_spacing: Some(0.4),
                },
                time: TimeSpec {
                    t_end: 1000.0,
                    dt: None,
                    flux: FluxKind::Centered,
                },
                verification: Tolerances::default(),
                output: None,
            }),
            _ => Err(Error::InvalidConfig(format!(
                "unknown preset {name:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks sizes, smallness `E₀ ≤ 0.1 |u₊ − u₋|` and the time step.
    pub fn validate(&self) -> Result<SystemModel> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let model = self
            .model
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let m = &self.mesh;
        if !(m.spacing > 0.0) || !(m.x_max > m.x_min) || !(m.x_min < 0.0 && m.x_max > 0.0) {
            return bad(format!(
                "mesh [{}, {}] with spacing {} must straddle the shock",
                m.x_min, m.x_max, m.spacing
            ));
        }
        if m.x_min.abs() < m.profile_halfwidth || m.x_max < m.profile_halfwidth {
            return bad("the run domain must contain the profile domain".into());
        }
        if let Some(c) = m.compare_spacing {
            if !(c > m.spacing) {
                return bad("compare_spacing must exceed spacing".into());
            }
        }
        if !(self.time.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.time.t_end));
        }
        let jump = (&model.u_plus - &model.u_minus).norm();
        if self.perturbation.is_empty() {
            return bad("at least one perturbation component is required".into());
        }
        for p in &self.perturbation {
            if !p.amplitude.is_finite() || p.amplitude.abs() > 0.1 * jump {
                return bad(format!(
                    "amplitude {} exceeds the smallness bound 0.1·|u₊ − u₋| = {}",
                    p.amplitude,
                    0.1 * jump
                ));
            }
            if !(p.width > 0.0) {
                return bad(format!("width must be positive, got {}", p.width));
            }
            if let Some(d) = &p.direction {
                if d.len() != model.dim() {
                    return bad(format!(
                        "direction has {} entries, the model has {}",
                        d.len(),
                        model.dim()
                    ));
                }
            }
        }
        if let Some(dt) = self.time.dt {
            for h in std::iter::once(m.spacing).chain(m.compare_spacing) {
                let (cfl, stab) =
                    step_limits(&model, h).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                if !(dt > 0.0) || dt > cfl || dt > stab {
                    return bad(format!(
                        "dt = {dt} violates the step limits (CFL {cfl:.4e}, stability {stab:.4e}) at h = {h}"
                    ));
                }
            }
        }
        Ok(model)
    }
}

/// The decomposition as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub excess_mass: Vec<f64>,
    pub wave_masses: Vec<f64>,
    pub delta_star: f64,
    pub exact_residual: f64,
    pub refined_residual: f64,
}

/// Exponents of the two meshes side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshComparison {
    pub spacing: f64,
    pub compare_spacing: f64,
    pub slopes: Vec<(Norm, f64, f64)>,
    pub max_change: f64,
    pub pass: bool,
}

/// `L²` exponents of the `theorem` and no-tracking residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitComparison {
    pub theorem_l2: PowerFit,
    pub unshifted_l2: PowerFit,
    /// Unshifted exponent `≤ −0.4`.
    pub unshifted_pass: bool,
    /// Fitted slope of the `theorem` residual is no larger.
    pub theorem_not_slower: bool,
    /// `max ‖v_thm‖₂ / ‖v_unshifted‖₂` over the fit window.
    pub max_norm_ratio: f64,
    /// The `theorem` residual is no larger at every fitted snapshot.
    pub theorem_dominates: bool,
}

impl SplitComparison {
    pub fn pass(&self) -> bool {
        self.unshifted_pass && (self.theorem_not_slower || self.theorem_dominates)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub label: String,
    pub config_hash: String,
    pub version: String,
    pub model: String,
    pub decay_rate: f64,
    pub nodes: usize,
    pub dt: f64,
    /// Snapshot times of the stored trajectory.
    pub times: Vec<f64>,
    pub decomposition: DecompositionSummary,
    pub mass_drift: f64,
    pub perturbation_l1: f64,
    pub mass_pass: bool,
    pub verification: VerificationReport,
    pub split: SplitComparison,
    pub mesh: Option<MeshComparison>,
    pub pass: bool,
}

/// Everything a run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: PipelineReport,
    pub trajectory: Trajectory,
    pub residual: Trajectory,
    pub track: ShiftTrack,
    pub ctx: EnvelopeContext,
}

/// One run on one mesh.
struct SingleRun {
    decomposition: MassDecomposition,
    exact_residual: f64,
    trajectory: Trajectory,
    residual: Trajectory,
    unshifted: Trajectory,
    track: ShiftTrack,
    perturbation_l1: f64,
    dt: f64,
    nodes: usize,
}

pub fn build_perturbation(cfg: &ExperimentConfig, family: &DiscreteProfile) -> Result<NodeField> {
    let mesh = family.mesh;
    let n = family.model.dim();
    let mut out = NodeField::zeros(n, mesh.nodes);
    let (base, _) = family.sample(0.0)?;
    for p in &cfg.perturbation {
        if p.shape == Shape::ShiftedProfile {
            let (moved, _) = family.sample(p.amplitude)?;
            out.axpy(1.0, &moved.sub(&base));
            continue;
        }
        let dir = p.direction.clone().unwrap_or_else(|| {
            let mut d = vec![0.0; n];
            d[0] = 1.0;
            d
        });
        let field = NodeField::from_fn(n, mesh.nodes, |i, o| {
            let s = p.amplitude * p.scalar(mesh.x(i));
            for c in 0..n {
                o[c] = s * dir[c];
            }
        });
        out.axpy(1.0, &field);
    }
    Ok(out)
}

fn single_run(
    cfg: &ExperimentConfig,
    model: &SystemModel,
    profile: &ShockProfile,
    spacing: f64,
) -> Result<SingleRun> {
    let mesh = Mesh::with_spacing(cfg.mesh.x_min, cfg.mesh.x_max, spacing)?;
    let family = DiscreteProfile::new(model, mesh, profile)?;
    let (base, _) = family.sample(0.0)?;
    let pert = build_perturbation(cfg, &family)?;
    let h = mesh.spacing();
    let perturbation_l1 = pert.data.iter().map(|x| x.abs()).sum::<f64>() * h;
    let minus = model.endstate_data(Side::Minus)?;
    let plus = model.endstate_data(Side::Plus)?;
    let modes = outgoing_modes(&minus, &plus);
    let pert_field = GridField::new(mesh, 0.0, pert.clone())?;
    let exact = decompose_initial(&minus, &plus, &modes, &pert_field)?;
    let decomposition = refine_decomposition(&exact, &minus, &plus, &family, &pert_field)?;
    let phi = decomposition.waves(&minus, &plus)?;
    let dt = match cfg.time.dt {
        Some(dt) => dt,
        None => stable_dt(model, h)?,
    };
    let opts = EvolveOptions {
        flux: cfg.time.flux,
        ..EvolveOptions::new(dt, cfg.time.t_end)
    };
    let mut u0 = base.clone();
    u0.axpy(1.0, &pert);
    let trajectory = evolve_nonlinear(model, &base, &GridField::new(mesh, 0.0, u0)?, &opts)?;
    let track = track_trajectory(
        &family,
        decomposition.delta_star,
        &phi,
        &trajectory,
        tracking_window(profile.decay_rate),
    )?;
    let res = assemble_residual(&trajectory, &decomposition, &phi, &track, &family)?;
    Ok(SingleRun {
        decomposition,
        exact_residual: exact.residual,
        trajectory,
        residual: res.theorem,
        unshifted: res.unshifted,
        track,
        perturbation_l1,
        dt,
        nodes: mesh.nodes,
    })
}

fn l2_fit(v: &Trajectory) -> Result<PowerFit> {
    lp_rates(v)?
        .into_iter()
        .find(|r| r.norm == Norm::L2)
        .map(|r| r.fit)
        .ok_or(Error::NormAtNoiseFloor)
}

/// Runs the full pipeline for `cfg`.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let model = cfg.validate()?;
    let profile = solve_profile(&model, cfg.mesh.profile_halfwidth, cfg.mesh.profile_nodes)?;
    let run = single_run(cfg, &model, &profile, cfg.mesh.spacing)?;
    let ctx = EnvelopeContext::new(&model, profile.decay_rate)?;
    let e0 = cfg
        .perturbation
        .iter()
        .map(|p| p.amplitude.abs())
        .sum::<f64>();
    let verification = verify(
        &cfg.label,
        &run.residual,
        &run.unshifted,
        &run.track,
        &ctx,
        e0,
    )?;
    let theorem_l2 = l2_fit(&run.residual)?;
    let unshifted_l2 = l2_fit(&run.unshifted)?;
    let h = run.residual.mesh.spacing();
    let max_norm_ratio = run
        .residual
        .times
        .iter()
        .zip(run.residual.fields.iter().zip(&run.unshifted.fields))
        .filter(|(t, _)| **t >= FIT_START)
        .map(|(_, (a, b))| Norm::L2.eval(a, h) / Norm::L2.eval(b, h))
        .fold(0.0, f64::max);
    let split = SplitComparison {
        unshifted_pass: unshifted_l2.slope <= -0.4,
        theorem_not_slower: theorem_l2.slope <= unshifted_l2.slope,
        max_norm_ratio,
        theorem_dominates: max_norm_ratio <= 1.0 + 1e-9,
        theorem_l2,
        unshifted_l2,
    };
    let mesh = match cfg.mesh.compare_spacing {
        Some(hc) => {
            let coarse = single_run(cfg, &model, &profile, hc)?;
            let fine_rates = lp_rates(&run.residual)?;
            let coarse_rates = lp_rates(&coarse.residual)?;
            let slopes: Vec<(Norm, f64, f64)> = fine_rates
                .iter()
                .zip(&coarse_rates)
                .map(|(f, c)| (f.norm, f.fit.slope, c.fit.slope))
                .collect();
            let max_change = slopes
                .iter()
                .map(|(_, a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Some(MeshComparison {
                spacing: cfg.mesh.spacing,
                compare_spacing: hc,
                slopes,
                max_change,
                pass: max_change < cfg.verification.mesh_fit_change,
            })
        }
        None => None,
    };
    let mass_drift = run.trajectory.mass_drift();
    let mass_pass = mass_drift <= cfg.verification.mass_drift * run.perturbation_l1;
    let pass =
        verification.pass && mass_pass && split.pass() && mesh.as_ref().is_none_or(|m| m.pass);
    let report = PipelineReport {
        label: cfg.label.clone(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        model: model.law.name().to_string(),
        decay_rate: profile.decay_rate,
        nodes: run.nodes,
        dt: run.dt,
        times: run.trajectory.times.clone(),
        decomposition: DecompositionSummary {
            excess_mass: run.decomposition.excess_mass.clone(),
            wave_masses: run.decomposition.masses.clone(),
            delta_star: run.decomposition.delta_star,
            exact_residual: run.exact_residual,
            refined_residual: run.decomposition.residual,
        },
        mass_drift,
        perturbation_l1: run.perturbation_l1,
        mass_pass,
        verification,
        split,
        mesh,
        pass,
    };
    Ok(RunOutput {
        report,
        trajectory: run.trajectory,
        residual: run.residual,
        track: run.track,
        ctx,
    })
}

/// Provenance written next to every artifact set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub crate_name: String,
    pub version: String,
    pub files: Vec<String>,
}

pub fn write_manifest(dir: &Path, config_hash: &str, files: Vec<String>) -> Result<()> {
    let m = Manifest {
        config_hash: config_hash.to_string(),
        crate_name: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        files,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

/// At most this many `x` samples per snapshot in the ratio map.
const MAP_COLUMNS: usize = 400;

/// `t, x, |v|/(ψ̄₁+ψ₂+α)` on a subsampled mesh.
pub fn ratio_map_csv(v: &Trajectory, ctx: &EnvelopeContext) -> String {
    let stride = (v.mesh.nodes / MAP_COLUMNS).max(1);
    let mut out = String::from("t,x,ratio\n");
    for (k, f) in v.fields.iter().enumerate() {
        let t = v.times[k];
        if t <= 0.0 {
            continue;
        }
        for i in (0..v.mesh.nodes).step_by(stride) {
            let x = v.mesh.x(i);
            let norm = f.node(i).iter().map(|c| c * c).sum::<f64>().sqrt();
            let env = bootstrap_envelope(ctx, x, t);
            out.push_str(&format!("{t:e},{x:e},{:e}\n", norm / env.max(1e-300)));
        }
    }
    out
}

/// Writes trajectory and residual snapshots, the shift track, the ratio map,
/// `report.json` and the manifest into `dir`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    out.trajectory.write_dir(dir, "u")?;
    out.residual.write_dir(dir, "residual")?;
    let mut shift = Vec::new();
    out.track.write_csv(&mut shift)?;
    std::fs::write(dir.join("shift.csv"), shift)?;
    std::fs::write(
        dir.join("ratio_map.csv"),
        ratio_map_csv(&out.residual, &out.ctx),
    )?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&out.report)?,
    )?;
    let mut files = vec![
        "report.json".to_string(),
        "shift.csv".into(),
        "ratio_map.csv".into(),
        "u_manifest.json".into(),
        "residual_manifest.json".into(),
    ];
    for stem in ["u", "residual"] {
        files.extend((0..out.trajectory.len()).map(|k| format!("{stem}_{k:03}.csv")));
    }
    write_manifest(dir, &out.report.config_hash, files)
}

/// Files produced by [`emit_plots`] and any warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotSet {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Gnuplot-ready columns from a run directory: one decay file per norm
/// (`t norm reference`), the reference slopes, the ratio series, the
/// heat map of `|v|/envelope` and the shift track.
pub fn emit_plots(run_dir: &Path, plot_dir: &Path) -> Result<PlotSet> {
    let report = read_json(&run_dir.join("report.json"))?;
    std::fs::create_dir_all(plot_dir)?;
    let mut set = PlotSet::default();
    let floats = |v: &serde_json::Value| -> Vec<f64> {
        v.as_array()
            .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
            .unwrap_or_default()
    };
    let times = floats(&report["times"]);
    let rates = report["verification"]["rates"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    if rates.is_empty() || times.is_empty() {
        set.warnings
            .push("report carries no decay series; no plots written".into());
        return Ok(set);
    }
    let mut refs = String::from("# norm prediction fitted_slope log_constant\n");
    for r in &rates {
        let name = r["norm"].as_str().unwrap_or("norm").to_string();
        let pred = r["prediction"].as_f64().unwrap_or(f64::NAN);
        let slope = r["fit"]["slope"].as_f64().unwrap_or(f64::NAN);
        let c = r["fit"]["log_constant"].as_f64().unwrap_or(f64::NAN);
        refs.push_str(&format!("{name} {pred} {slope} {c}\n"));
        let norms = floats(&r["norms"]);
        // reference line through the fitted constant with the predicted slope
        let mut body = String::from("# t norm reference\n");
        for (t, n) in times.iter().zip(&norms) {
            body.push_str(&format!(
                "{t:e} {n:e} {:e}\n",
                c.exp() * (1.0 + t).powf(pred)
            ));
        }
        let path = plot_dir.join(format!("decay_{name}.dat"));
        std::fs::write(&path, body)?;
        set.files.push(path);
    }
    let path = plot_dir.join("reference_slopes.dat");
    std::fs::write(&path, refs)?;
    set.files.push(path);

    let ratio_times = floats(&report["verification"]["pointwise"]["times"]);
    let ratio = floats(&report["verification"]["pointwise"]["ratio"]);
    let mut body = String::from("# t ratio\n");
    for (t, r) in ratio_times.iter().zip(&ratio) {
        body.push_str(&format!("{t:e} {r:e}\n"));
    }
    let path = plot_dir.join("ratio_series.dat");
    std::fs::write(&path, body)?;
    set.files.push(path);

    let map = run_dir.join("ratio_map.csv");
    if map.exists() {
        let text = std::fs::read_to_string(&map)?;
        let mut body = String::from("# t x ratio (blocks per t)\n");
        let mut last_t = None;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::InvalidConfig(format!(
                    "malformed line in {}",
                    map.display()
                )));
            }
            if last_t.is_some() && last_t != Some(cols[0]) {
                body.push('\n');
            }
            last_t = Some(cols[0]);
            body.push_str(&format!("{} {} {}\n", cols[0], cols[1], cols[2]));
        }
        let path = plot_dir.join("ratio_heatmap.dat");
        std::fs::write(&path, body)?;
        set.files.push(path);
    } else {
        set.warnings
            .push("ratio_map.csv missing; heat map skipped".into());
    }
    let shift = run_dir.join("shift.csv");
    if shift.exists() {
        let text = std::fs::read_to_string(&shift)?;
        let path = plot_dir.join("shift.dat");
        std::fs::write(&path, text.replace(',', " ").replacen("t ", "# t ", 1))?;
        set.files.push(path);
    } else {
        set.warnings
            .push("shift.csv missing; shift plot skipped".into());
    }
    Ok(set)
}

/// Sup ratio of one source of the Green-function remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenSource {
    pub y: f64,
    /// `C_fit` on the fine and the coarse mesh.
    pub c_fit: f64,
    pub c_fit_coarse: f64,
    pub change: f64,
    /// Largest ū′ coefficient removed from the remainder.
    pub max_projection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenCheck {
    pub spacing: f64,
    pub sources: Vec<GreenSource>,
    /// Relative `L¹` error against the convected heat kernel at `y = −30`.
    pub far_field_error: f64,
    pub pass: bool,
}

/// Bound values below this fraction of their per-snapshot maximum are not
/// used for `C_fit`.
const GREEN_FLOOR: f64 = 1e-6;
const GREEN_SIGMA: f64 = 0.5;

struct GreenSetup {
    model: SystemModel,
    mesh: Mesh,
    background: NodeField,
    tangent: NodeField,
}

fn green_setup(model: &SystemModel, profile: &ShockProfile, h: f64) -> Result<GreenSetup> {
    let mesh = Mesh::with_spacing(-80.0, 60.0, h)?;
    let fam = DiscreteProfile::new(model, mesh, profile)?;
    let (background, tangent) = fam.sample(0.0)?;
    Ok(GreenSetup {
        model: model.clone(),
        mesh,
        background,
        tangent,
    })
}

/// `(C_fit, max |ū′ coefficient|)` for a source at `y` over `t ∈ [1, t_max]`,
/// sampled at every `stride`-th node.
fn green_fit(
    s: &GreenSetup,
    ctx: &EnvelopeContext,
    y: f64,
    t_max: f64,
    stride: usize,
) -> Result<(f64, f64)> {
    let h = s.mesh.spacing();
    let times: Vec<f64> = crate::evolution::geometric_times(t_max)
        .into_iter()
        .filter(|&t| t >= 1.0)
        .collect();
    let opts = EvolveOptions {
        dt: 0.2 * h,
        snapshots: times.clone(),
        flux: FluxKind::Centered,
    };
    let traj = crate::evolution::green_function_approx(
        &s.model,
        &s.background,
        s.mesh,
        y,
        GREEN_SIGMA,
        0,
        &opts,
    )?;
    let tt: f64 = s.tangent.data.iter().map(|a| a * a).sum::<f64>() * h;
    let mut c_fit: f64 = 0.0;
    let mut max_proj: f64 = 0.0;
    for (k, &t) in traj.times.iter().enumerate() {
        if t < 1.0 {
            continue;
        }
        let e = crate::templates::excited_e(ctx, y, t).value;
        let mut rem = traj.fields[k].clone();
        rem.axpy(-e, &s.tangent);
        let c = rem
            .data
            .iter()
            .zip(&s.tangent.data)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * h
            / tt;
        rem.axpy(-c, &s.tangent);
        max_proj = max_proj.max(c.abs());
        let nodes: Vec<usize> = (0..s.mesh.nodes).step_by(stride).collect();
        let bound: Vec<f64> = nodes
            .iter()
            .map(|&i| {
                crate::templates::gtilde_bound(
                    ctx,
                    crate::templates::DerivativeOrder::None,
                    s.mesh.x(i),
                    t,
                    y,
                )
            })
            .collect();
        let top = bound.iter().copied().fold(0.0, f64::max);
        for (&i, b) in nodes.iter().zip(&bound) {
            if *b >= GREEN_FLOOR * top {
                c_fit = c_fit.max(rem.node(i)[0].abs() / b);
            }
        }
    }
    if !c_fit.is_finite() {
        return Err(Error::EnvelopeVanishes("Green-function remainder".into()));
    }
    Ok((c_fit, max_proj))
}

/// Numerical Green function of the Burgers shock: the remainder after the
/// excited term and the ū′ projection against `C_fit · G̃` bound, on mesh
/// `h` and `2h`, plus the far-field heat-kernel match.
pub fn green_check(h: f64) -> Result<GreenCheck> {
    let model = make_burgers();
    let profile = solve_profile(&model, 40.0, 8001)?;
    let ctx = EnvelopeContext::new(&model, profile.decay_rate)?;
    let fine = green_setup(&model, &profile, h)?;
    let coarse = green_setup(&model, &profile, 2.0 * h)?;
    let sources = [-30.0, -10.0, -3.0]
        .iter()
        .map(|&y| {
            let (c_fit, max_projection) = green_fit(&fine, &ctx, y, 30.0, 2)?;
            let (c_fit_coarse, _) = green_fit(&coarse, &ctx, y, 30.0, 1)?;
            Ok(GreenSource {
                y,
                c_fit,
                c_fit_coarse,
                change: (c_fit - c_fit_coarse).abs() / c_fit,
                max_projection,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let far_field_error = far_field_error(&fine, -30.0, 5.0)?;
    let pass = far_field_error < 0.05 && sources.iter().all(|s| s.change < 0.1);
    Ok(GreenCheck {
        spacing: h,
        sources,
        far_field_error,
        pass,
    })
}

fn far_field_error(s: &GreenSetup, y: f64, t: f64) -> Result<f64> {
    let h = s.mesh.spacing();
    let data = s.model.endstate_data(Side::Minus)?;
    let traj = crate::evolution::green_function_approx(
        &s.model,
        &s.background,
        s.mesh,
        y,
        GREEN_SIGMA,
        0,
        &EvolveOptions {
            dt: 0.1 * h,
            snapshots: vec![t],
            flux: FluxKind::Centered,
        },
    )?;
    let (a, beta) = (data.speeds[0], data.beta[0]);
    let var = 2.0 * beta * t + GREEN_SIGMA * GREEN_SIGMA;
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in 0..s.mesh.nodes {
        let x = s.mesh.x(i);
        let g = (-(x - y - a * t).powi(2) / (2.0 * var)).exp()
            / (2.0 * std::f64::consts::PI * var).sqrt();
        diff += (traj.last().node(i)[0] - g).abs() * h;
        norm += g * h;
    }
    Ok(diff / norm)
}

/// Profile residual and decay rate of a configured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub label: String,
    pub config_hash: String,
    pub model: String,
    pub halfwidth: f64,
    pub nodes: usize,
    pub decay_rate: f64,
    pub ode_residual: f64,
    pub pass: bool,
}

/// Tolerance of the profile ODE residual.
pub const PROFILE_RESIDUAL_TOLERANCE: f64 = 1e-8;

pub fn run_profile(cfg: &ExperimentConfig) -> Result<(ShockProfile, ProfileSummary)> {
    let model = cfg.validate()?;
    let profile = solve_profile(&model, cfg.mesh.profile_halfwidth, cfg.mesh.profile_nodes)?;
    let ode_residual = profile.ode_residual(&model);
    let summary = ProfileSummary {
        label: cfg.label.clone(),
        config_hash: cfg.hash(),
        model: model.law.name().to_string(),
        halfwidth: cfg.mesh.profile_halfwidth,
        nodes: cfg.mesh.profile_nodes,
        decay_rate: profile.decay_rate,
        ode_residual,
        pass: ode_residual <= PROFILE_RESIDUAL_TOLERANCE && profile.decay_rate > 0.0,
    };
    Ok((profile, summary))
}

/// Writes `profile.csv`, `profile.json` and the manifest into `dir`.
pub fn write_profile(profile: &ShockProfile, summary: &ProfileSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    profile.write_csv(&mut csv)?;
    std::fs::write(dir.join("profile.csv"), csv)?;
    std::fs::write(
        dir.join("profile.json"),
        serde_json::to_string_pretty(summary)?,
    )?;
    write_manifest(
        dir,
        &summary.config_hash,
        vec!["profile.csv".into(), "profile.json".into()],
    )
}

/// Kernel setup for the certificates of a configured model (wave mass 1).
pub fn kernel_setup(cfg: &ExperimentConfig) -> Result<crate::kernel_quadrature::KernelSetup> {
    let model = cfg.validate()?;
    let profile = solve_profile(&model, cfg.mesh.profile_halfwidth, cfg.mesh.profile_nodes)?;
    crate::kernel_quadrature::KernelSetup::new(&model, profile.decay_rate, 1.0)
}
