mod common;

use hybrid_orbit::hybrid::{
    execute, execute_until, validate, Horizon, HybridState, StopReason, StopRule,
};
use hybrid_orbit::numerics::linalg;

use common::{event_time_residuals, executable_models, shipped_models};

#[test]
fn repeated_runs_are_bit_identical() {
    for (case, horizon) in executable_models() {
        let a = execute(&case.system, &case.start, horizon, &case.opts).unwrap();
        let b = execute(&case.system, &case.start, horizon, &case.opts).unwrap();
        assert_eq!(a, b, "{}", case.name);
    }
}

#[test]
fn events_are_located_to_the_event_tolerance() {
    for (case, horizon) in executable_models() {
        let worst = event_time_residuals(&case, horizon)
            .into_iter()
            .fold(0.0, f64::max);
        assert!(
            worst <= 10.0 * case.opts.event_tol,
            "{}: {worst:e}",
            case.name
        );
    }
}

#[test]
fn split_runs_compose() {
    for (case, horizon) in executable_models() {
        let full = execute(&case.system, &case.start, horizon, &case.opts).unwrap();
        let t_total = full.final_time;
        let t1 = 0.43 * t_total;
        let first = execute(&case.system, &case.start, Horizon::time(t1), &case.opts).unwrap();
        let second = execute_until(
            &case.system,
            &first.final_state,
            t1,
            Horizon::time(t_total - t1),
            StopRule::None,
            &case.opts,
        );
        let second = match (horizon.max_events, second) {
            (Some(n), _) => execute_until(
                &case.system,
                &first.final_state,
                t1,
                Horizon::events(n - first.events.len(), horizon.time),
                StopRule::None,
                &case.opts,
            )
            .unwrap(),
            (None, r) => r.unwrap(),
        };
        assert_eq!(
            second.final_state.domain, full.final_state.domain,
            "{}",
            case.name
        );
        assert_eq!(
            first.events.len() + second.events.len(),
            full.events.len(),
            "{}",
            case.name
        );
        let scale = linalg::norm(&full.final_state.x).max(1.0);
        let tol = 10.0
            * case.opts.rel_tol.max(case.opts.abs_tol)
            * scale
            * full.events.len().max(1) as f64;
        let d = linalg::dist(&second.final_state.x, &full.final_state.x);
        assert!(
            d <= tol.max(1e-7 * scale),
            "{}: {d:e} vs {tol:e}",
            case.name
        );
    }
}

#[test]
fn every_model_passes_validation_at_guard_samples() {
    for case in shipped_models() {
        assert_eq!(case.samples.len(), 64);
        let rep = validate(&case.system, &case.samples).unwrap();
        assert!(
            rep.is_clean(),
            "{}: {:?}",
            case.name,
            &rep.issues[..rep.issues.len().min(3)]
        );
        assert!(rep.guard_checks > 0, "{}", case.name);
    }
}

#[test]
fn event_limit_stops_after_the_reset() {
    for (case, _) in executable_models() {
        let tr = execute(
            &case.system,
            &case.start,
            Horizon::events(1, 50.0),
            &case.opts,
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::EventLimit, "{}", case.name);
        assert_eq!(tr.events.len(), 1);
        let e = &tr.events[0];
        assert_eq!(tr.final_state, HybridState::new(e.to, e.post.clone()));
        assert_eq!(tr.final_time, e.time);
    }
}

#[test]
fn guard_stop_keeps_the_pre_reset_state() {
    for (case, horizon) in executable_models() {
        let full = execute(&case.system, &case.start, horizon, &case.opts).unwrap();
        let first = &full.events[0];
        let tr = execute_until(
            &case.system,
            &case.start,
            0.0,
            Horizon::time(50.0),
            StopRule::Guard(first.guard),
            &case.opts,
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::GuardHit, "{}", case.name);
        assert!(tr.events.is_empty());
        assert_eq!(tr.final_state.x, first.pre, "{}", case.name);
    }
}

#[test]
fn zero_horizon_is_empty() {
    for (case, _) in executable_models() {
        let tr = execute(&case.system, &case.start, Horizon::time(0.0), &case.opts).unwrap();
        assert!(tr.events.is_empty());
        assert_eq!(tr.final_state, case.start, "{}", case.name);
    }
}
