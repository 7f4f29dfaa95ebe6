mod common;

use hybrid_orbit::hybrid::{execute, Horizon, HybridState};
use hybrid_orbit::models::hopper::{self, HopperParams};
use hybrid_orbit::models::lls::{self, LlsParams};
use hybrid_orbit::models::polyped::{self, allocation_matrix, Allocator, PolypedParams};
use hybrid_orbit::numerics::linalg;
use hybrid_orbit::numerics::ode::IntegratorOptions;
use hybrid_orbit::numerics::solve::{min_norm_newton, NewtonOptions};
use proptest::prelude::*;

use common::LLS_GAIT;

fn mirror_z(z: &[f64]) -> Vec<f64> {
    vec![-z[0], z[1], -z[2], -z[3]]
}

#[test]
fn hopper_touchdown_removes_foot_kinetic_energy() {
    let p = HopperParams::stiff_ground();
    let sys = hopper::make_hopper(&p).unwrap();
    let x0 = HybridState::new(hopper::AERIAL, vec![2.6, 0.0, 0.4, 0.0]);
    let tr = execute(
        &sys,
        &x0,
        Horizon::time(12.0),
        &IntegratorOptions::default(),
    )
    .unwrap();
    let mut touchdowns = 0;
    for e in tr.events.iter().filter(|e| e.guard == hopper::TOUCHDOWN) {
        touchdowns += 1;
        let before = p.aerial_energy(&e.pre);
        let after = p.aerial_energy(&[e.post[0], e.post[1], 0.0, 0.0]);
        let lost = 0.5 * p.m * e.pre[3] * e.pre[3];
        assert!(after < before);
        assert!((before - after - lost).abs() < 1e-9 * before.abs().max(1.0));
    }
    assert!(touchdowns >= 3);
}

#[test]
fn hopper_flight_loses_energy_only_through_the_damper() {
    let p = HopperParams::stiff_ground();
    let sys = hopper::make_hopper(&p).unwrap();
    let x0 = HybridState::new(hopper::AERIAL, vec![2.6, 0.0, 0.4, 0.0]);
    let tr = execute(
        &sys,
        &x0,
        Horizon::time(12.0),
        &IntegratorOptions::default(),
    )
    .unwrap();
    for seg in tr.segments.iter().filter(|s| s.domain == hopper::AERIAL) {
        let (t0, t1) = (seg.t_start(), seg.t_end());
        if t1 - t0 < 1e-6 {
            continue;
        }
        // Composite Simpson on the dense output.
        let n = 400;
        let h = (t1 - t0) / n as f64;
        let mut work = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let x = seg.eval(t0 + i as f64 * h);
            work += w * p.b * x[3] * x[3];
        }
        work *= h / 3.0;
        let de = p.aerial_energy(&seg.eval(t1)) - p.aerial_energy(&seg.eval(t0));
        assert!(de <= 1e-9);
        assert!((de + work).abs() < 1e-6, "{de} vs {}", -work);
    }
}

#[test]
fn default_hopper_parameters_validate() {
    assert!(HopperParams::default().validate().is_ok());
    let bad = HopperParams {
        a: 1.0,
        ..Default::default()
    };
    assert_eq!(
        hopper::make_hopper(&bad).unwrap_err().code(),
        "INVALID_INPUT"
    );
}

#[test]
fn lls_stance_conserves_energy() {
    let p = LlsParams::default();
    let sys = lls::make_lls(&p).unwrap();
    let x0 = HybridState::new(lls::LEFT, p.step_start(1.0, &LLS_GAIT));
    let tr = execute(
        &sys,
        &x0,
        Horizon::events(4, 20.0),
        &IntegratorOptions::default(),
    )
    .unwrap();
    assert_eq!(tr.events.len(), 4);
    let e0 = p.energy(&x0.x);
    for seg in &tr.segments {
        for i in 0..seg.len() {
            let e = p.energy(seg.knot(i));
            assert!((e - e0).abs() < 1e-8, "{e} vs {e0}");
        }
    }
    // Touchdown keeps the velocities and places the new foot at rest length.
    for e in &tr.events {
        assert!((p.energy(&e.post) - e0).abs() < 1e-8);
    }
}

#[test]
fn lls_right_step_mirrors_the_left_step() {
    let p = LlsParams::default();
    let opts = IntegratorOptions::default();
    for z in [LLS_GAIT.to_vec(), vec![0.1, 0.9, 0.4, -0.2]] {
        let left = lls::lls_step(&p, 1.0, &z, &opts).unwrap();
        let right = lls::lls_step(&p, -1.0, &mirror_z(&z), &opts).unwrap();
        assert!((left.duration - right.duration).abs() < 1e-10);
        assert!(linalg::dist(&lls::mirror(&left.end), &right.end) < 1e-9);
    }
}

#[test]
fn lls_symmetric_gait_is_a_stride_fixed_point() {
    let p = LlsParams::default();
    let opts = IntegratorOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        ..IntegratorOptions::default()
    };
    let f = |z: &[f64]| -> hybrid_orbit::Result<Vec<f64>> {
        let end = lls::lls_step(&p, 1.0, z, &opts)?.z_end;
        Ok(mirror_z(&end).iter().zip(z).map(|(a, b)| a - b).collect())
    };
    let sol = min_norm_newton(
        &f,
        &LLS_GAIT,
        &NewtonOptions {
            tol: 1e-10,
            ..Default::default()
        },
    )
    .unwrap();
    // Heading is a symmetry, so compare the rotation-invariant parts of the gait.
    let invariants = |z: &[f64]| [z[1].hypot(z[2]), z[2].atan2(z[1]) - z[0], z[3]];
    assert!(
        linalg::dist(&invariants(&sol.x), &invariants(&LLS_GAIT)) < 1e-2,
        "{:?}",
        sol.x
    );
    let stride = lls::lls_stride(&p, &sol.x, &opts).unwrap();
    assert!(linalg::dist(&stride, &sol.x) < 1e-8);
}

#[test]
fn polyped_grid_rejects_odd_layouts() {
    let lp = LlsParams::default();
    assert!(PolypedParams::grid(5, &lp).is_err());
    assert!(PolypedParams::grid(2, &lp).is_err());
    let p = PolypedParams::grid(6, &lp).unwrap();
    assert_eq!(p.stance(polyped::STANCE_A).len(), 3);
    assert_eq!(p.swing(polyped::STANCE_A), p.stance(polyped::STANCE_B));
}

#[test]
fn unactuated_polyped_drifts() {
    let p = PolypedParams::grid(4, &LlsParams::default()).unwrap();
    let sys = polyped::make_free_polyped(&p).unwrap();
    let mut x = vec![0.0; p.dim()];
    x[3] = 0.5;
    x[5] = 0.2;
    x[6 + 2 * 4 + 2] = 0.3;
    let tr = execute(
        &sys,
        &HybridState::new(polyped::STANCE_A, x.clone()),
        Horizon::time(2.0),
        &IntegratorOptions::default(),
    )
    .unwrap();
    let y = &tr.final_state.x;
    assert!(tr.events.is_empty());
    assert!((y[0] - 1.0).abs() < 1e-10 && (y[2] - 0.4).abs() < 1e-10);
    assert!((y[3] - 0.5).abs() < 1e-12);
    // Leg 1 is in set B, so it swings while set A stands.
    assert!((y[6 + 2] - 0.6).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocation_reproduces_any_wrench(w in prop::collection::vec(-5.0f64..5.0, 3), n in prop::sample::select(vec![4usize, 6, 8])) {
        let p = PolypedParams::grid(n, &LlsParams::default()).unwrap();
        for dom in [polyped::STANCE_A, polyped::STANCE_B] {
            let legs = p.stance(dom);
            let al = Allocator::new(&p, &legs).unwrap();
            let u = al.solve([w[0], w[1], w[2]]);
            let got = linalg::mat_vec(&allocation_matrix(&p, &legs), &u);
            prop_assert!(linalg::dist(&got, &w) < 1e-10);
        }
    }
}
