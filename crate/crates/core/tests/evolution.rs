use viscous_shock::evolution::{
    evolve_linearized, evolve_nonlinear, green_function_approx, stable_dt, DiscreteProfile,
    EvolveOptions, FluxKind, GridField,
};
use viscous_shock::mesh::{Mesh, NodeField};
use viscous_shock::profile::solve_profile;
use viscous_shock::systems::{endstate_data, make_burgers, make_psystem, Side, SystemModel};

struct Setup {
    model: SystemModel,
    mesh: Mesh,
    background: NodeField,
    tangent: NodeField,
}

fn burgers(x_min: f64, x_max: f64, h: f64) -> Setup {
    let model = make_burgers();
    let profile = solve_profile(&model, 40.0, 8001).unwrap();
    let mesh = Mesh::with_spacing(x_min, x_max, h).unwrap();
    let fam = DiscreteProfile::new(&model, mesh, &profile).unwrap();
    let (background, tangent) = fam.sample(0.0).unwrap();
    Setup {
        model,
        mesh,
        background,
        tangent,
    }
}

fn psystem(h: f64) -> Setup {
    let model = make_psystem(2.0, 1.0, 2.0).unwrap();
    let profile = solve_profile(&model, 60.0, 12001).unwrap();
    let mesh = Mesh::with_spacing(-60.0, 60.0, h).unwrap();
    let fam = DiscreteProfile::new(&model, mesh, &profile).unwrap();
    let (background, tangent) = fam.sample(0.0).unwrap();
    Setup {
        model,
        mesh,
        background,
        tangent,
    }
}

fn bump(mesh: &Mesh, dim: usize, center: f64, width: f64, amp: &[f64]) -> NodeField {
    NodeField::from_fn(dim, mesh.nodes, |i, out| {
        let g = (-(mesh.x(i) - center).powi(2) / (2.0 * width * width)).exp();
        for c in 0..dim {
            out[c] = amp[c] * g;
        }
    })
}

#[test]
fn discrete_profile_is_preserved() {
    for s in [burgers(-40.0, 40.0, 0.1), psystem(0.1)] {
        let opts = EvolveOptions::new(stable_dt(&s.model, s.mesh.spacing()).unwrap(), 10.0);
        let init = GridField::new(s.mesh, 0.0, s.background.clone()).unwrap();
        let traj = evolve_nonlinear(&s.model, &s.background, &init, &opts).unwrap();
        let drift = traj.last().sub(&s.background).max_abs();
        assert!(drift < 1e-6, "{} drift {drift:e}", s.model.law.name());
    }
}

#[test]
fn translation_mode_is_stationary() {
    for s in [burgers(-40.0, 40.0, 0.1), psystem(0.1)] {
        let opts = EvolveOptions::new(stable_dt(&s.model, s.mesh.spacing()).unwrap(), 10.0);
        let init = GridField::new(s.mesh, 0.0, s.tangent.clone()).unwrap();
        let traj = evolve_linearized(&s.model, &s.background, &init, &opts).unwrap();
        let drift = traj.last().sub(&s.tangent).max_abs() / s.tangent.max_abs();
        assert!(drift < 1e-8, "{} drift {drift:e}", s.model.law.name());
    }
}

#[test]
fn zero_data_stay_zero() {
    let s = burgers(-40.0, 40.0, 0.2);
    let zero = NodeField::zeros(1, s.mesh.nodes);
    let traj = evolve_linearized(
        &s.model,
        &s.background,
        &GridField::new(s.mesh, 0.0, zero.clone()).unwrap(),
        &EvolveOptions::new(0.05, 4.0),
    )
    .unwrap();
    assert!(traj.fields.iter().all(|f| f == &zero));
}

#[test]
fn linearized_mass_is_conserved() {
    for s in [burgers(-60.0, 60.0, 0.1), psystem(0.1)] {
        let n = s.model.dim();
        let amp: Vec<f64> = (0..n).map(|c| 1.0 - 0.3 * c as f64).collect();
        let v0 = bump(&s.mesh, n, -5.0, 2.0, &amp);
        let traj = evolve_linearized(
            &s.model,
            &s.background,
            &GridField::new(s.mesh, 0.0, v0).unwrap(),
            &EvolveOptions::new(stable_dt(&s.model, s.mesh.spacing()).unwrap(), 8.0),
        )
        .unwrap();
        assert!(traj.mass_drift() < 1e-10, "{:e}", traj.mass_drift());
    }
}

#[test]
fn nonlinear_mass_is_conserved() {
    let s = burgers(-60.0, 60.0, 0.1);
    let u0 = {
        let mut u = s.background.clone();
        u.axpy(0.05, &bump(&s.mesh, 1, -8.0, 1.5, &[1.0]));
        u
    };
    let l1 = 0.05 * 1.5 * (2.0 * std::f64::consts::PI).sqrt();
    let traj = evolve_nonlinear(
        &s.model,
        &s.background,
        &GridField::new(s.mesh, 0.0, u0).unwrap(),
        &EvolveOptions::new(0.02, 16.0),
    )
    .unwrap();
    assert!(traj.mass_drift() <= 1e-6 * l1, "{:e}", traj.mass_drift());
}

#[test]
fn green_function_mass_is_one() {
    let s = burgers(-60.0, 60.0, 0.1);
    let traj = green_function_approx(
        &s.model,
        &s.background,
        s.mesh,
        -10.0,
        0.5,
        0,
        &EvolveOptions::new(0.02, 20.0),
    )
    .unwrap();
    for m in &traj.mass {
        assert!((m[0] - 1.0).abs() < 1e-8, "{}", m[0]);
    }
}

#[test]
fn green_function_is_absorbed_by_the_shock() {
    let s = burgers(-60.0, 60.0, 0.1);
    let h = s.mesh.spacing();
    let traj = green_function_approx(
        &s.model,
        &s.background,
        s.mesh,
        -10.0,
        0.5,
        0,
        &EvolveOptions::new(0.02, 20.0),
    )
    .unwrap();
    let v = traj.last();
    let dot = |a: &NodeField, b: &NodeField| {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>() * h
    };
    let c = dot(v, &s.tangent) / dot(&s.tangent, &s.tangent);
    // the tangent carries mass c (u+ − u-) = −2c in the shifted-profile family
    let projected = (c * s.tangent.integral(h)[0]).abs();
    assert!(projected >= 0.5, "{projected}");
}

#[test]
fn green_function_far_field_is_convected_heat_kernel() {
    for s in [burgers(-80.0, 40.0, 0.1), psystem(0.1)] {
        let h = s.mesh.spacing();
        let (y, t, sigma0) = (-30.0, 5.0, 0.5);
        let data = endstate_data(&s.model, Side::Minus, s.model.u_minus.as_slice()).unwrap();
        let n = s.model.dim();
        for src in 0..n {
            let traj = green_function_approx(
                &s.model,
                &s.background,
                s.mesh,
                y,
                sigma0,
                src,
                &EvolveOptions {
                    dt: 0.01,
                    snapshots: vec![t],
                    flux: FluxKind::Centered,
                },
            )
            .unwrap();
            let v = traj.last();
            let exact = NodeField::from_fn(n, s.mesh.nodes, |i, out| {
                let x = s.mesh.x(i);
                for k in 0..n {
                    let var = 2.0 * data.beta[k] * t + sigma0 * sigma0;
                    let g = (-(x - y - data.speeds[k] * t).powi(2) / (2.0 * var)).exp()
                        / (2.0 * std::f64::consts::PI * var).sqrt();
                    let w = data.l(k)[src];
                    for c in 0..n {
                        out[c] += data.r(k)[c] * w * g;
                    }
                }
            });
            let diff: f64 = v.sub(&exact).data.iter().map(|x| x.abs()).sum::<f64>() * h;
            let norm: f64 = exact.data.iter().map(|x| x.abs()).sum::<f64>() * h;
            assert!(
                diff / norm < 0.05,
                "{} src {src}: {:e}",
                s.model.law.name(),
                diff / norm
            );
        }
    }
}

#[test]
fn nonlinear_minus_linear_is_quadratic() {
    let s = burgers(-60.0, 60.0, 0.1);
    let opts = EvolveOptions {
        dt: 0.02,
        snapshots: vec![4.0],
        flux: FluxKind::Centered,
    };
    let g = bump(&s.mesh, 1, -5.0, 1.0, &[1.0]);
    let gap = |eps: f64| {
        let mut u0 = s.background.clone();
        u0.axpy(eps, &g);
        let un = evolve_nonlinear(
            &s.model,
            &s.background,
            &GridField::new(s.mesh, 0.0, u0).unwrap(),
            &opts,
        )
        .unwrap();
        let vl = evolve_linearized(
            &s.model,
            &s.background,
            &GridField::new(s.mesh, 0.0, g.scaled(eps)).unwrap(),
            &opts,
        )
        .unwrap();
        un.last().sub(&s.background).sub(vl.last()).max_abs()
    };
    let (g2, g3) = (gap(1e-2), gap(1e-3));
    let ratio = g2 / g3;
    assert!((70.0..140.0).contains(&ratio), "{g2:e} {g3:e}");
}

#[test]
fn lax_friedrichs_option_conserves_mass() {
    let s = burgers(-60.0, 60.0, 0.1);
    let mut u0 = s.background.clone();
    u0.axpy(0.05, &bump(&s.mesh, 1, -8.0, 1.5, &[1.0]));
    let opts = EvolveOptions {
        dt: 0.02,
        snapshots: vec![2.0, 8.0],
        flux: FluxKind::LocalLaxFriedrichs,
    };
    let traj = evolve_nonlinear(
        &s.model,
        &s.background,
        &GridField::new(s.mesh, 0.0, u0).unwrap(),
        &opts,
    )
    .unwrap();
    assert!(traj.mass_drift() < 1e-8, "{:e}", traj.mass_drift());
}

#[test]
fn trajectory_export_writes_manifest() {
    let s = burgers(-20.0, 20.0, 0.2);
    let traj = evolve_linearized(
        &s.model,
        &s.background,
        &GridField::new(s.mesh, 0.0, s.tangent.clone()).unwrap(),
        &EvolveOptions::new(0.05, 2.0),
    )
    .unwrap();
    let dir = std::env::temp_dir().join(format!("shock-export-{}", std::process::id()));
    traj.write_dir(&dir, "v").unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("v_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["files"].as_array().unwrap().len(), traj.len());
    let csv = std::fs::read_to_string(dir.join("v_000.csv")).unwrap();
    assert_eq!(csv.lines().count(), s.mesh.nodes + 1);
    std::fs::remove_dir_all(dir).ok();
}
