use viscous_shock::decomposition::ShiftTrack;
use viscous_shock::evolution::{geometric_times, Trajectory};
use viscous_shock::mesh::{Mesh, NodeField};
use viscous_shock::systems::{make_burgers, make_psystem};
use viscous_shock::templates::{
    pointwise_derivative_envelope, pointwise_envelope, EnvelopeContext,
};
use viscous_shock::verification::{
    derivative_envelope_check, lp_rates, pointwise_ratio, shift_rates, Norm,
};

fn synthetic(mesh: Mesh, dim: usize, f: impl Fn(f64, f64) -> f64) -> Trajectory {
    let times: Vec<f64> = std::iter::once(0.0)
        .chain(geometric_times(1000.0))
        .collect();
    let fields: Vec<NodeField> = times
        .iter()
        .map(|&t| {
            NodeField::from_fn(dim, mesh.nodes, |i, o| {
                o.iter_mut().for_each(|c| *c = f(mesh.x(i), t))
            })
        })
        .collect();
    let mass = fields.iter().map(|f| f.integral(mesh.spacing())).collect();
    Trajectory {
        mesh,
        times,
        fields,
        mass,
    }
}

fn psystem_ctx() -> EnvelopeContext {
    EnvelopeContext::new(&make_psystem(2.0, 1.0, 2.0).unwrap(), 0.5).unwrap()
}

#[test]
fn zero_field_has_zero_ratio() {
    let ctx = EnvelopeContext::new(&make_burgers(), 1.0).unwrap();
    let v = synthetic(Mesh::symmetric(100.0, 2001).unwrap(), 1, |_, _| 0.0);
    let r = pointwise_ratio(&v, &ctx).unwrap();
    assert!(r.fallback);
    assert!(r.ratio.iter().all(|&x| x == 0.0));
    let d = derivative_envelope_check(&v, &ctx).unwrap();
    assert!(d.ratio.iter().all(|&x| x == 0.0));
}

#[test]
fn scaled_envelope_has_constant_ratio() {
    let ctx = psystem_ctx();
    let mesh = Mesh::symmetric(200.0, 2001).unwrap();
    // split 0.3·env across two components so the pointwise norm is 0.3·env
    let times: Vec<f64> = std::iter::once(0.0).chain(geometric_times(100.0)).collect();
    let fields: Vec<NodeField> = times
        .iter()
        .map(|&t| {
            NodeField::from_fn(2, mesh.nodes, |i, o| {
                let e = 0.3 * pointwise_envelope(&ctx, mesh.x(i), t);
                o[0] = 0.6 * e;
                o[1] = 0.8 * e;
            })
        })
        .collect();
    let mass = fields.iter().map(|f| f.integral(mesh.spacing())).collect();
    let v = Trajectory {
        mesh,
        times,
        fields,
        mass,
    };
    let r = pointwise_ratio(&v, &ctx).unwrap();
    assert!(!r.fallback);
    for x in &r.ratio {
        assert!((x - 0.3).abs() < 1e-12, "{x}");
    }
}

#[test]
fn synthetic_decay_exponents() {
    let mesh = Mesh::symmetric(400.0, 8001).unwrap();
    let v = synthetic(mesh, 1, |x, t| {
        (1.0 + t).powf(-0.75) * (-x * x / (4.0 * (1.0 + t))).exp()
    });
    let rates = lp_rates(&v).unwrap();
    let inf = rates.iter().find(|r| r.norm == Norm::LInf).unwrap();
    assert!((inf.fit.slope + 0.75).abs() <= 0.02, "{}", inf.fit.slope);
    // L1 norm ~ (1+t)^{-1/4}, L2 ~ (1+t)^{-1/2}
    let l1 = rates.iter().find(|r| r.norm == Norm::L1).unwrap();
    assert!((l1.fit.slope + 0.25).abs() <= 0.02, "{}", l1.fit.slope);
    assert!(rates.iter().all(|r| r.pass));
}

#[test]
fn synthetic_shift_exponent() {
    let times: Vec<f64> = std::iter::once(0.0)
        .chain(geometric_times(1000.0))
        .collect();
    let delta: Vec<f64> = times.iter().map(|t| 0.1 / (1.0 + t).sqrt()).collect();
    let mut track = ShiftTrack::from_samples(times.clone(), delta.clone());
    // keep the prescribed value at t = 0 for this synthetic check
    track.delta[0] = delta[0];
    let r = shift_rates(&track).unwrap();
    assert!((r.delta.as_ref().unwrap().slope + 0.5).abs() <= 0.01);
    assert!(r.pass);
    assert!((r.delta_constant - 0.1).abs() < 1e-12);
}

#[test]
fn derivative_ratio_matches_closed_form() {
    let ctx = psystem_ctx();
    let mesh = Mesh::symmetric(100.0, 20001).unwrap();
    let times = vec![0.0, 4.0];
    let field = |x: f64, t: f64| (-(x - 1.0).powi(2) / (4.0 * (1.0 + t))).exp();
    let fields: Vec<NodeField> = times
        .iter()
        .map(|&t| NodeField::from_fn(1, mesh.nodes, |i, o| o[0] = field(mesh.x(i), t)))
        .collect();
    let mass = fields.iter().map(|f| f.integral(mesh.spacing())).collect();
    let v = Trajectory {
        mesh,
        times,
        fields,
        mass,
    };
    let d = derivative_envelope_check(&v, &ctx).unwrap();
    assert_eq!(d.times, vec![4.0]);
    // hand value at (0, 4): |v_x| = (2/20) e^{-1/20}
    let vx = 0.1 * (-0.05f64).exp();
    let expected = vx / pointwise_derivative_envelope(&ctx, 0.0, 4.0);
    let i0 = mesh.nodes / 2;
    let numeric = viscous_shock::verification::slope_magnitude(&v.fields[1], mesh.spacing())[i0]
        / pointwise_derivative_envelope(&ctx, 0.0, 4.0);
    assert!((numeric / expected - 1.0).abs() < 0.01);
    assert!(d.ratio[0] >= numeric && d.ratio[0].is_finite());
}

#[test]
fn envelope_hierarchy_is_consistent() {
    let ctx = psystem_ctx();
    let mesh = Mesh::symmetric(200.0, 4001).unwrap();
    let v = synthetic(mesh, 1, |x, t| {
        (1.0 + t).powf(-0.75) * (-x * x / (4.0 * (1.0 + t))).exp()
    });
    let r = pointwise_ratio(&v, &ctx).unwrap();
    for (k, f) in v.fields.iter().enumerate() {
        assert!(f.max_abs() <= r.max() * r.envelope_sup[k] * (1.0 + 1e-12));
    }
}
