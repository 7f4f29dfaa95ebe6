//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use hybrid_orbit::control::embedding::{body_deviation, PolypedEmbedding, PolypedStrideMap};
use hybrid_orbit::control::{
    deadbeat_residuals, synth_deadbeat_multicycle, synth_deadbeat_onecycle, synth_linear_deadbeat,
    ClosedLoopMap, ControlledReturnMap,
};
use hybrid_orbit::hybrid::{execute, execute_until, Horizon, StopRule};
use hybrid_orbit::models::hopper::{self, HopperParams};
use hybrid_orbit::models::lls::{self, LlsParams};
use hybrid_orbit::models::oracles::{self, ProjectGlueParams};
use hybrid_orbit::models::polyped::PolypedParams;
use hybrid_orbit::numerics::linalg::{self, Mat, RANK_TOL};
use hybrid_orbit::poincare::{
    ball_samples, compare_sections, find_periodic_orbit, map_rank, spectral_summary,
    PoincareMapHandle, ReturnMap, Section,
};
use hybrid_orbit::reduction::{
    analyze_reduction, contraction_profile, fiber_collapse_test, PhaseMap, ReductionOptions,
    Verdict,
};
use hybrid_orbit::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    clock_handle, controlled_clock, controlled_halfturn, controlled_hopper, event_time_residuals,
    executable_models, halfturn_handle, hopper_orbit, HALFTURN_LAMBDA, LLS_GAIT,
};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T>(r: hybrid_orbit::Result<T>, what: &str) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

fn wrap(a: f64) -> f64 {
    let d = linalg::rem_euclid(a, TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

fn criterion_1() -> Outcome {
    let p = HopperParams::default();
    let h = ok(hopper::midstance_map(&p), "section")?;
    let mut last = String::new();
    for g in [0.8, 0.9, 0.94, 1.0, 1.1] {
        match find_periodic_orbit(&h, &[g]) {
            Ok(o) => {
                let s = ok(spectral_summary(&h, &o.coords, RANK_TOL), "spectrum")?;
                let lam = s.eigenvalues.first().map(|e| e.re).unwrap_or(f64::NAN);
                check!(
                    (o.coords[0] - 0.94).abs() <= 0.02,
                    "y = {:.4} outside 0.94 +- 0.02",
                    o.coords[0]
                );
                check!(
                    (lam - 0.57).abs() <= 0.03,
                    "multiplier {lam:.4} outside 0.57 +- 0.03"
                );
                return Ok(format!("y = {:.4}, multiplier = {lam:.4}", o.coords[0]));
            }
            Err(e) => last = format!("guess {g}: {e}"),
        }
    }
    Err(format!("no periodic orbit found ({last})"))
}

fn criterion_2() -> Outcome {
    let o = ok(hopper_orbit(&HopperParams::stiff_ground()), "orbit")?;
    // Touchdown chart coordinates are (y, dy, dx); dx is the lower-mass velocity.
    let dir = vec![vec![0.0, 0.0, 1.0]];
    let big = ok(
        fiber_collapse_test(&o.touchdown, &o.xi_touchdown, &dir, 0.1, 1),
        "fiber 0.1",
    )?
    .max;
    let small = ok(
        fiber_collapse_test(&o.touchdown, &o.xi_touchdown, &dir, 0.01, 1),
        "fiber 0.01",
    )?
    .max;
    check!(big < 1e-8 && small < 1e-8, "residuals {big:e}, {small:e}");
    // Residuals at roundoff level carry no magnitude information.
    let floor = 1e-14;
    let ratio = big.max(floor) / small.max(floor);
    check!(
        (0.1..=10.0).contains(&ratio),
        "residual ratio {ratio:.3} tracks the perturbation"
    );
    Ok(format!("residuals {big:.1e} (0.1), {small:.1e} (0.01)"))
}

fn projectglue_handle(p: &ProjectGlueParams) -> Result<PoincareMapHandle, String> {
    let sys = std::sync::Arc::new(ok(oracles::make_projectglue_oracle(p), "oracle")?);
    let sec = ok(
        Section::level(
            &sys,
            oracles::PG_A,
            hybrid_orbit::hybrid::level_fn(oracles::projectglue_section_level),
            1.0,
            &[0.0, 0.0, 0.5],
        ),
        "section",
    )?;
    Ok(PoincareMapHandle::new(sys, sec))
}

fn criterion_3() -> Outcome {
    let o = ok(hopper_orbit(&HopperParams::stiff_ground()), "orbit")?;
    let mid = ok(
        spectral_summary(&o.midstance, &o.orbit.coords, RANK_TOL),
        "midstance",
    )?;
    let td = ok(
        spectral_summary(&o.touchdown, &o.xi_touchdown, RANK_TOL),
        "touchdown",
    )?;
    for (name, s) in [("midstance", &mid), ("touchdown", &td)] {
        check!(
            s.ranks[0] <= s.rank_bound,
            "{name}: rank {} > bound {}",
            s.ranks[0],
            s.rank_bound
        );
        check!(s.rank_bound == 1, "{name}: bound {}", s.rank_bound);
    }
    let p = ProjectGlueParams::default();
    let h = projectglue_handle(&p)?;
    let s = ok(spectral_summary(&h, &[0.3, -0.2], RANK_TOL), "projectglue")?;
    let want = oracles::projectglue_dp(&p);
    let exact = ok(map_rank(&want, RANK_TOL), "closed-form rank")?;
    check!(
        s.ranks[0] == 1 && exact == 1,
        "projectglue rank {} (closed form {exact})",
        s.ranks[0]
    );
    check!(s.ranks[0] <= s.rank_bound, "projectglue rank exceeds bound");
    Ok(format!(
        "hopper ranks {}/{} <= 1, projectglue rank 1",
        mid.ranks[0], td.ranks[0]
    ))
}

fn criterion_4() -> Outcome {
    let o = ok(hopper_orbit(&HopperParams::stiff_ground()), "orbit")?;
    let c = ok(
        compare_sections(
            &o.midstance,
            &o.orbit.coords,
            &o.touchdown,
            &o.xi_touchdown,
            RANK_TOL,
        ),
        "hopper",
    )?;
    check!(
        c.unmatched == 0 && c.max_discrepancy < 1e-3,
        "hopper discrepancy {:e}, unmatched {}",
        c.max_discrepancy,
        c.unmatched
    );
    let lam2 = HALFTURN_LAMBDA * HALFTURN_LAMBDA;
    let up = halfturn_handle(HALFTURN_LAMBDA, 0.0);
    let sys = std::sync::Arc::new(ok(
        oracles::make_halfturn_oracle(HALFTURN_LAMBDA, 1.0),
        "oracle",
    )?);
    let sec = ok(
        Section::level(
            &sys,
            oracles::LOWER,
            hybrid_orbit::hybrid::level_fn(|x| x[0]),
            1.0,
            &[0.0, -1.0],
        ),
        "section",
    )?;
    let lo = PoincareMapHandle::new(sys, sec);
    let h = ok(
        compare_sections(&up, &[1.0], &lo, &[-1.0], RANK_TOL),
        "half-turn",
    )?;
    let worst = h
        .nonzero_a
        .iter()
        .chain(&h.nonzero_b)
        .map(|e| (e.re - lam2).abs() + e.im.abs())
        .fold(0.0, f64::max);
    check!(
        h.unmatched == 0 && worst < 1e-8,
        "half-turn error {worst:e}"
    );
    Ok(format!(
        "hopper discrepancy {:.1e}, half-turn error {worst:.1e}",
        c.max_discrepancy
    ))
}

fn criterion_5() -> Outcome {
    let h = halfturn_handle(HALFTURN_LAMBDA, 0.0);
    let mut worst: f64 = 0.0;
    for i in 0..11 {
        let r = 0.5 + 0.15 * i as f64;
        let got = ok(h.apply(&[r]), "half-turn")?[0];
        worst = worst.max((got - (1.0 + HALFTURN_LAMBDA * HALFTURN_LAMBDA * (r - 1.0))).abs());
    }
    check!(worst < 1e-8, "half-turn grid error {worst:e}");
    let p = ProjectGlueParams::default();
    let pg = projectglue_handle(&p)?;
    let dp = ok(pg.jacobian(&[0.2, 0.1]), "projectglue")?;
    let err = (&dp - oracles::projectglue_dp(&p)).amax();
    check!(err < 1e-8, "projectglue DP error {err:e}");
    Ok(format!(
        "half-turn grid {worst:.1e}, projectglue DP {err:.1e}"
    ))
}

fn criterion_6() -> Outcome {
    let c = oracles::nilpotent_oracle_matrix();
    let h = clock_handle(&c, &Mat::zeros(3, 0), &[]);
    let s = ok(spectral_summary(&h, &[0.0; 3], RANK_TOL), "summary")?;
    let prof = ok(
        contraction_profile(&h, &[0.0; 3], &[0.1, 0.1, 0.1], 8, RANK_TOL),
        "profile",
    )?;
    let transverse = prof.transverse[s.nilpotent_index..]
        .iter()
        .copied()
        .fold(0.0, f64::max);
    check!(
        transverse <= 1e-10,
        "transverse {transverse:e} after {} cycles",
        s.nilpotent_index
    );
    let ratio_err = prof
        .tangential_ratios
        .iter()
        .map(|r| r.map(|v| (v - 0.5).abs()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    check!(ratio_err < 1e-3, "tangential ratio error {ratio_err:e}");
    Ok(format!(
        "nilpotent index {}, transverse {transverse:.1e}, ratio error {ratio_err:.1e}",
        s.nilpotent_index
    ))
}

fn criterion_7() -> Outcome {
    let map = controlled_halfturn();
    let law = ok(synth_deadbeat_onecycle(&map, None), "half-turn law")?;
    let res = ok(
        deadbeat_residuals(&map, &law, &ball_samples(&[1.0], 0.05, 16, 7)),
        "residuals",
    )?;
    let worst = res.iter().copied().fold(0.0, f64::max);
    check!(worst <= 1e-7, "one-cycle residual {worst:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tried = 0;
    let mut norm_worst: f64 = 0.0;
    while tried < 200 {
        let n = rng.random_range(1..=5);
        let p = rng.random_range(1..=2);
        let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        if controllability_margin(&a, &b) <= 1e-2 {
            continue;
        }
        tried += 1;
        let sol = ok(
            synth_linear_deadbeat(&a, &b, &Mat::zeros(n, 0), tried),
            "linear deadbeat",
        )?;
        let acl = &a + &b * &sol.gain;
        norm_worst = norm_worst.max(ok(
            linalg::spectral_norm(&linalg::mat_pow(&acl, sol.k)),
            "norm",
        )?);
    }
    check!(
        norm_worst <= 1e-9,
        "linear deadbeat ||A_cl^k|| = {norm_worst:e}"
    );

    let (a, b) = oracles::companion_pair();
    let comp = controlled_clock(&a, &b);
    match synth_deadbeat_onecycle(&comp, None) {
        Err(Error::RankDeficient {
            achieved: 1,
            required: 2,
            ..
        }) => {}
        other => return Err(format!("companion k = 1: {other:?}")),
    }
    let law2 = ok(synth_deadbeat_multicycle(&comp, 2), "companion k = 2")?;
    check!(law2.horizon() == 2, "companion horizon {}", law2.horizon());

    let cl = ClosedLoopMap::new(&map, &law);
    let xi = map.nominal().0.to_vec();
    let rank = ok(
        map_rank(&ok(cl.jacobian(&xi), "closed-loop DP")?, RANK_TOL),
        "rank",
    )?;
    let rep = ok(
        analyze_reduction(&cl, &xi, &ReductionOptions::default()),
        "reduction",
    )?;
    check!(
        rank == 0 && rep.verdict == Verdict::ExactCertified && rep.r == 0,
        "closed loop rank {rank}, {:?} r = {}",
        rep.verdict,
        rep.r
    );

    let hop = controlled_hopper(HopperParams::stiff_ground());
    let hlaw = ok(synth_deadbeat_onecycle(&hop, None), "hopper law")?;
    let hxi = hop.nominal().0.to_vec();
    let hcl = ClosedLoopMap::new(&hop, &hlaw);
    let hrep = ok(
        analyze_reduction(
            &hcl,
            &hxi,
            &ReductionOptions {
                n_samples: 6,
                radius: 0.02,
                cycles: 3,
                ..Default::default()
            },
        ),
        "hopper reduction",
    )?;
    check!(
        hrep.verdict == Verdict::ExactCertified && hrep.r == 0,
        "hopper closed loop {:?} r = {}",
        hrep.verdict,
        hrep.r
    );
    Ok(format!("one-cycle {worst:.1e}, linear {norm_worst:.1e} over {tried} pairs, companion k = 2, closed loops r = 0"))
}

fn controllability_margin(a: &Mat, b: &Mat) -> f64 {
    let n = a.nrows();
    let p = b.ncols();
    let mut c = Mat::zeros(n, n * p);
    let mut cur = b.clone();
    for i in 0..n {
        c.view_mut((0, i * p), (n, p)).copy_from(&cur);
        cur = a * cur;
    }
    linalg::singular_values(&c)
        .ok()
        .and_then(|s| s.get(n - 1).copied())
        .unwrap_or(0.0)
}

fn criterion_8() -> Outcome {
    let lp = LlsParams::default();
    let mut parts = Vec::new();
    for n in [4, 6] {
        let pp = ok(PolypedParams::grid(n, &lp), "layout")?;
        let emb = ok(PolypedEmbedding::new(&pp, &lp), "embedding")?;
        let x0 = ok(
            emb.nominal_state(lls::LEFT, &lp.step_start(1.0, &LLS_GAIT)),
            "nominal",
        )?;
        let closed = ok(emb.run(&x0, 3), "closed loop")?;
        let template = ok(emb.template_run(&x0, 3), "template")?;
        let dev = ok(body_deviation(&closed, &template, 20), "deviation")?;
        check!(dev < 1e-6, "n = {n}: body deviation {dev:e}");

        let feet_a: Vec<f64> = (0..2 * n)
            .map(|j| x0.x[6 + j] + 0.03 * (j as f64).cos())
            .collect();
        let feet_b: Vec<f64> = (0..2 * n)
            .map(|j| x0.x[6 + j] - 0.02 * (j as f64 + 1.0).sin())
            .collect();
        let va: Vec<f64> = (0..2 * n).map(|j| 0.1 * (j as f64).sin()).collect();
        let vb = vec![-0.05; 2 * n];
        let ra = ok(
            emb.run(
                &ok(
                    emb.initial_state(lls::LEFT, &x0.x[..6], &feet_a, &va),
                    "start a",
                )?,
                2,
            ),
            "run a",
        )?;
        let rb = ok(
            emb.run(
                &ok(
                    emb.initial_state(lls::LEFT, &x0.x[..6], &feet_b, &vb),
                    "start b",
                )?,
                2,
            ),
            "run b",
        )?;
        let limbs = linalg::dist(
            &ra.final_state.x[6..6 + 4 * n],
            &rb.final_state.x[6..6 + 4 * n],
        );
        check!(limbs < 1e-8, "n = {n}: limb states differ by {limbs:e}");

        let map = PolypedStrideMap::new(&emb);
        let s0 = PolypedStrideMap::coords(&x0, n);
        let j = ok(map.jacobian(&s0), "stride jacobian")?;
        let block = PolypedStrideMap::limb_block(&j).amax();
        check!(block < 1e-6, "n = {n}: limb block {block:e}");
        parts.push(format!(
            "n = {n}: deviation {dev:.1e}, limbs {limbs:.1e}, block {block:.1e}"
        ));
    }
    Ok(parts.join("; "))
}

fn criterion_9() -> Outcome {
    let o = ok(hopper_orbit(&HopperParams::stiff_ground()), "orbit")?;
    let pm = ok(PhaseMap::build(&o.midstance, &o.orbit), "phase map")?;
    let mut y = pm.orbit_point(0.5);
    y.x[0] += 0.01;
    let a = ok(pm.phase_of(&y, pm.settle_cycles), "phase")?;
    let mut drift: f64 = 0.0;
    let mut resets = 0;
    for frac in [0.25, 0.5, 0.75, 1.0] {
        let tr = ok(
            execute(&pm.system, &y, Horizon::time(frac * pm.period), &pm.opts),
            "flow",
        )?;
        resets = resets.max(tr.events.len());
        let b = ok(pm.phase_of(&tr.final_state, pm.settle_cycles), "phase")?;
        drift = drift.max(wrap(b - a - frac * TAU).abs());
    }
    check!(resets >= 2, "only {resets} resets in one period");
    check!(drift < 1e-3, "phase drift {drift:e}");

    let pts = ok(pm.isochron_sample(0.0, 8, 0.05, 3), "isochron")?;
    let ends = pts
        .iter()
        .map(|p| {
            execute_until(
                &pm.system,
                p,
                0.0,
                Horizon::time(pm.period),
                StopRule::None,
                &pm.opts,
            )
            .map(|t| t.final_state)
        })
        .collect::<hybrid_orbit::Result<Vec<_>>>();
    let ends = ok(ends, "isochron flow")?;
    let mut spread: f64 = 0.0;
    for e in &ends {
        check!(
            e.domain == ends[0].domain,
            "isochron images in different domains"
        );
        spread = spread.max(linalg::dist(&e.x, &ends[0].x));
    }
    check!(
        spread < 1e-6,
        "phase drift {drift:.1e}; isochron images spread {spread:.2e} after one cycle"
    );
    Ok(format!(
        "phase drift {drift:.1e}, isochron spread {spread:.1e}"
    ))
}

fn criterion_10() -> Outcome {
    let mut worst_event: f64 = 0.0;
    let mut worst_split: f64 = 0.0;
    let mut count = 0;
    for (case, horizon) in executable_models() {
        count += 1;
        let a = ok(
            execute(&case.system, &case.start, horizon, &case.opts),
            case.name,
        )?;
        let b = ok(
            execute(&case.system, &case.start, horizon, &case.opts),
            case.name,
        )?;
        check!(a == b, "{}: repeat runs differ", case.name);
        let ev = event_time_residuals(&case, horizon)
            .into_iter()
            .fold(0.0, f64::max)
            / case.opts.event_tol;
        check!(
            ev <= 10.0,
            "{}: event residual {ev:.2} x event_tol",
            case.name
        );
        worst_event = worst_event.max(ev);

        let t1 = 0.43 * a.final_time;
        let first = ok(
            execute(&case.system, &case.start, Horizon::time(t1), &case.opts),
            case.name,
        )?;
        let rest = match horizon.max_events {
            Some(n) => Horizon::events(n - first.events.len(), horizon.time),
            None => Horizon::time(a.final_time - t1),
        };
        let second = ok(
            execute_until(
                &case.system,
                &first.final_state,
                t1,
                rest,
                StopRule::None,
                &case.opts,
            ),
            case.name,
        )?;
        let scale = linalg::norm(&a.final_state.x).max(1.0);
        let tol =
            10.0 * case.opts.rel_tol.max(case.opts.abs_tol) * scale * a.events.len().max(1) as f64;
        let d = linalg::dist(&second.final_state.x, &a.final_state.x);
        check!(
            second.final_state.domain == a.final_state.domain,
            "{}: split run ends in another domain",
            case.name
        );
        check!(
            d <= tol.max(1e-7 * scale),
            "{}: split error {d:e} vs {tol:e}",
            case.name
        );
        worst_split = worst_split.max(d / tol);
    }
    Ok(format!("{count} models, event residual <= {worst_event:.1e} x tol, split error <= {worst_split:.1e} x budget"))
}

fn run(id: &str, limit: Option<Duration>, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
    let took = start.elapsed();
    let out = match (out, limit) {
        (Ok(_), Some(l)) if took > l => Err(format!("took {took:.1?}, limit {l:?}")),
        (o, _) => o,
    };
    let (tag, detail) = match &out {
        Ok(d) => ("PASS", d.clone()),
        Err(d) => ("FAIL", d.clone()),
    };
    println!(
        "criterion {id:>2}: {tag}  [{:.2}s] {detail}",
        took.as_secs_f64()
    );
    out.is_ok()
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let suite: [Criterion; 10] = [
        ("1", Some(Duration::from_secs(10)), criterion_1),
        ("2", None, criterion_2),
        ("3", None, criterion_3),
        ("4", None, criterion_4),
        ("5", None, criterion_5),
        ("6", None, criterion_6),
        ("7", None, criterion_7),
        ("8", Some(Duration::from_secs(60)), criterion_8),
        ("9", None, criterion_9),
        ("10", None, criterion_10),
    ];
    let failed = suite
        .iter()
        .filter(|(id, limit, f)| !run(id, *limit, *f))
        .count();
    println!(
        "{} of {} criteria passed",
        suite.len() - failed,
        suite.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
