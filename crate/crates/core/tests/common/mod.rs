#![allow(dead_code)]

use std::sync::Arc;

use hybrid_orbit::control::embedding::PolypedEmbedding;
use hybrid_orbit::control::{HybridControlledMap, SystemFamily};
use hybrid_orbit::hybrid::{level_fn, Horizon, HybridState, HybridSystem};
use hybrid_orbit::models::hopper::{self, HopperParams};
use hybrid_orbit::models::lls::{self, LlsParams};
use hybrid_orbit::models::oracles::{self, ProjectGlueParams};
use hybrid_orbit::models::polyped::{self, PolypedParams};
use hybrid_orbit::numerics::linalg::Mat;
use hybrid_orbit::numerics::ode::IntegratorOptions;
use hybrid_orbit::poincare::find_periodic_orbit;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LLS_GAIT: [f64; 4] = lls::DEFAULT_GAIT;

pub struct Case {
    pub name: &'static str,
    pub system: Arc<HybridSystem>,
    pub start: HybridState,
    /// `None` for systems that are only checked by `validate`.
    pub horizon: Option<Horizon>,
    pub opts: IntegratorOptions,
    pub samples: Vec<HybridState>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cases that have an execution horizon.
pub fn executable_models() -> Vec<(Case, Horizon)> {
    shipped_models()
        .into_iter()
        .filter_map(|c| c.horizon.map(|h| (c, h)))
        .collect()
}

/// Every shipped model with a start state, a horizon crossing several resets and
/// 64 guard samples.
pub fn shipped_models() -> Vec<Case> {
    let mut out = Vec::new();
    for (name, p) in [
        ("hopper", HopperParams::default()),
        ("hopper stiff ground", HopperParams::stiff_ground()),
    ] {
        out.push(Case {
            name,
            system: Arc::new(hopper::make_hopper(&p).unwrap()),
            start: HybridState::new(hopper::AERIAL, vec![2.6, 0.0, 0.4, 0.0]),
            horizon: Some(Horizon::time(12.0)),
            opts: IntegratorOptions::default(),
            samples: hopper::guard_samples(&p, 64, &mut rng(1)),
        });
    }
    let lp = LlsParams::default();
    out.push(Case {
        name: "lls",
        system: Arc::new(lls::make_lls(&lp).unwrap()),
        start: HybridState::new(lls::LEFT, lp.step_start(1.0, &LLS_GAIT)),
        horizon: Some(Horizon::time(8.0)),
        opts: IntegratorOptions::default(),
        samples: lls::guard_samples(&lp, 64, &mut rng(2)),
    });
    for n in [4, 6] {
        let pp = PolypedParams::grid(n, &lp).unwrap();
        let emb = PolypedEmbedding::new(&pp, &lp).unwrap();
        let start = emb
            .nominal_state(lls::LEFT, &lp.step_start(1.0, &LLS_GAIT))
            .unwrap();
        out.push(Case {
            name: if n == 4 {
                "embedded polyped (4 legs)"
            } else {
                "embedded polyped (6 legs)"
            },
            system: emb.system().clone(),
            samples: embedding_samples(&emb, &lp, 64),
            start,
            horizon: Some(Horizon::events(3, 50.0)),
            opts: emb.options().clone(),
        });
        let sys = polyped::make_polyped(
            &pp,
            Arc::new(move |_, _| vec![0.0; 2 * n]),
            level_fn(|x| 1.0 - x[0]),
        )
        .unwrap();
        let mut x = vec![0.0; pp.dim()];
        x[3] = 0.8;
        x[4] = 0.1;
        for k in 0..n {
            x[6 + 2 * n + 2 * k] = 0.3;
        }
        out.push(Case {
            name: if n == 4 {
                "open-loop polyped (4 legs)"
            } else {
                "open-loop polyped (6 legs)"
            },
            system: Arc::new(sys),
            start: HybridState::new(polyped::STANCE_A, x),
            // The switch face stays active after landing, so this system is only validated.
            horizon: None,
            opts: IntegratorOptions::default(),
            samples: polyped_switch_samples(&pp, 64),
        });
    }
    out.push(Case {
        name: "half-turn oracle",
        system: Arc::new(oracles::make_controlled_halfturn(0.6, 1.0, 0.05).unwrap()),
        start: HybridState::new(oracles::UPPER, vec![0.0, 1.5]),
        horizon: Some(Horizon::time(20.0)),
        opts: IntegratorOptions::default(),
        samples: oracles::halfturn_samples(64, &mut rng(3)),
    });
    let pg = ProjectGlueParams::default();
    out.push(Case {
        name: "projection-glue oracle",
        system: Arc::new(oracles::make_projectglue_oracle(&pg).unwrap()),
        start: HybridState::new(oracles::PG_A, vec![1.0, -0.5, 0.2]),
        horizon: Some(Horizon::time(7.5)),
        opts: IntegratorOptions::default(),
        samples: oracles::projectglue_samples(64, &mut rng(4)),
    });
    let c = oracles::nilpotent_oracle_matrix();
    out.push(Case {
        name: "linear clock oracle",
        system: Arc::new(oracles::make_linear_clock_oracle(&c, &Mat::zeros(3, 0), &[]).unwrap()),
        start: HybridState::new(0, vec![0.1, 0.2, 0.3, 0.25]),
        horizon: Some(Horizon::time(6.5)),
        opts: IntegratorOptions::default(),
        samples: oracles::clock_samples(3, 64, &mut rng(5)),
    });
    out
}

/// Step-end states of perturbed closed-loop runs.
fn embedding_samples(emb: &PolypedEmbedding, lp: &LlsParams, count: usize) -> Vec<HybridState> {
    let n = emb.legs();
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < count {
        let s = 0.01 * (i as f64 - 8.0);
        let z = [
            LLS_GAIT[0] + s,
            LLS_GAIT[1] - 0.5 * s,
            LLS_GAIT[2],
            LLS_GAIT[3] + s,
        ];
        let base = emb
            .nominal_state(lls::LEFT, &lp.step_start(1.0, &z))
            .unwrap();
        let feet: Vec<f64> = (0..2 * n)
            .map(|j| base.x[6 + j] + 0.02 * ((i + j) as f64).sin())
            .collect();
        let x0 = emb
            .initial_state(lls::LEFT, &base.x[..6], &feet, &vec![0.1 * s; 2 * n])
            .unwrap();
        let tr = emb.run(&x0, 4).unwrap();
        out.extend(
            tr.events
                .iter()
                .map(|e| HybridState::new(e.from, e.pre.clone())),
        );
        i += 1;
    }
    out.truncate(count);
    out
}

/// States on the open-loop switch face `x = 1`, moving forward.
fn polyped_switch_samples(p: &PolypedParams, count: usize) -> Vec<HybridState> {
    (0..count)
        .map(|i| {
            let mut x = vec![0.0; p.dim()];
            x[0] = 1.0;
            x[1] = 0.01 * i as f64;
            x[3] = 0.2 + 0.01 * i as f64;
            HybridState::new(i % 2, x)
        })
        .collect()
}

/// Return map of the clock oracle `x -> C x + B theta` on `w = 1/2`.
pub fn clock_handle(c: &Mat, b: &Mat, theta: &[f64]) -> hybrid_orbit::poincare::PoincareMapHandle {
    use hybrid_orbit::poincare::{PoincareMapHandle, Section};
    let n = c.nrows();
    let sys = Arc::new(oracles::make_linear_clock_oracle(c, b, theta).unwrap());
    let mut guess = vec![0.0; n + 1];
    guess[n] = 0.5;
    let sec = Section::level(
        &sys,
        0,
        level_fn(oracles::clock_section_level(n)),
        1.0,
        &guess,
    )
    .unwrap();
    PoincareMapHandle::new(sys, sec)
}

/// Upper half-axis return map of the half-turn oracle with `x0 = 1`.
pub fn halfturn_handle(lambda: f64, theta: f64) -> hybrid_orbit::poincare::PoincareMapHandle {
    use hybrid_orbit::poincare::{PoincareMapHandle, Section};
    let sys = Arc::new(oracles::make_controlled_halfturn(lambda, 1.0, theta).unwrap());
    let sec = Section::level(
        &sys,
        oracles::UPPER,
        level_fn(oracles::halfturn_upper_section_level),
        -1.0,
        &[0.0, 1.0],
    )
    .unwrap();
    PoincareMapHandle::new(sys, sec)
}

pub struct HopperOrbit {
    pub midstance: hybrid_orbit::poincare::PoincareMapHandle,
    pub orbit: hybrid_orbit::poincare::PeriodicOrbit,
    pub touchdown: hybrid_orbit::poincare::PoincareMapHandle,
    /// Touchdown-section coordinates of the orbit.
    pub xi_touchdown: Vec<f64>,
}

pub fn hopper_orbit(p: &HopperParams) -> hybrid_orbit::Result<HopperOrbit> {
    use hybrid_orbit::poincare::find_periodic_orbit;
    let midstance = hopper::midstance_map(p)?;
    let orbit = find_periodic_orbit(&midstance, &[1.0])?;
    let (_, tr) = midstance.first_return_trace(&orbit.state.x)?;
    let td = tr
        .events
        .iter()
        .find(|e| e.guard == hopper::TOUCHDOWN)
        .ok_or(hybrid_orbit::Error::NoReturn)?;
    let touchdown = hopper::touchdown_map(p, &td.pre)?;
    let xi_touchdown = touchdown.coords(&td.pre);
    Ok(HopperOrbit {
        midstance,
        orbit,
        touchdown,
        xi_touchdown,
    })
}

pub const HALFTURN_LAMBDA: f64 = 0.6;

pub fn controlled_halfturn() -> HybridControlledMap {
    let family: SystemFamily =
        Arc::new(|th: &[f64]| oracles::make_controlled_halfturn(HALFTURN_LAMBDA, 1.0, th[0]));
    HybridControlledMap::new(
        family,
        halfturn_handle(HALFTURN_LAMBDA, 0.0),
        vec![1.0],
        vec![0.0],
    )
}

pub fn controlled_clock(a: &Mat, b: &Mat) -> HybridControlledMap {
    let (a2, b2) = (a.clone(), b.clone());
    let family: SystemFamily =
        Arc::new(move |th: &[f64]| oracles::make_linear_clock_oracle(&a2, &b2, th));
    let p = b.ncols();
    HybridControlledMap::new(
        family,
        clock_handle(a, b, &vec![0.0; p]),
        vec![0.0; a.nrows()],
        vec![0.0; p],
    )
}

pub fn controlled_hopper(base: HopperParams) -> HybridControlledMap {
    let template = hopper::midstance_map(&base).unwrap();
    let xi = find_periodic_orbit(&template, &[1.0]).unwrap().coords;
    let family: SystemFamily =
        Arc::new(move |th: &[f64]| hopper::make_hopper(&HopperParams { k: th[0], ..base }));
    HybridControlledMap::new(family, template, xi, vec![base.k])
}

/// Same section and nominal point as `design`, different plant parameters.
pub fn controlled_hopper_with(
    plant: HopperParams,
    design: &HybridControlledMap,
) -> HybridControlledMap {
    let family: SystemFamily =
        Arc::new(move |th: &[f64]| hopper::make_hopper(&HopperParams { k: th[0], ..plant }));
    HybridControlledMap::new(
        family,
        design.template.clone(),
        design.xi.clone(),
        design.theta.clone(),
    )
}

/// Level residual at each pre-reset state, in time units (`|h| / |dh/dt|`).
pub fn event_time_residuals(case: &Case, horizon: Horizon) -> Vec<f64> {
    let tr = hybrid_orbit::hybrid::execute(&case.system, &case.start, horizon, &case.opts).unwrap();
    assert!(!tr.events.is_empty(), "{}: no events", case.name);
    tr.events
        .iter()
        .map(|e| {
            let g = &case.system.guards[e.guard];
            let dom = &case.system.domains[g.domain];
            let h = &*dom.faces[g.face].level;
            let f = case.system.eval_field(g.domain, &e.pre);
            let eps = 1e-7;
            let xp: Vec<f64> = e.pre.iter().zip(&f).map(|(x, v)| x + eps * v).collect();
            let xm: Vec<f64> = e.pre.iter().zip(&f).map(|(x, v)| x - eps * v).collect();
            let rate = (h(&xp) - h(&xm)) / (2.0 * eps);
            h(&e.pre).abs() / rate.abs()
        })
        .collect()
}
