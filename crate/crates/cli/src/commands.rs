use std::f64::consts::TAU;
use std::sync::Arc;

use hybrid_orbit::control::embedding::body_deviation;
use hybrid_orbit::control::{
    deadbeat_residuals, synth_deadbeat_multicycle, synth_deadbeat_onecycle, ClosedLoopMap,
    DeadbeatLaw, HybridControlledMap, SystemFamily,
};
use hybrid_orbit::hybrid::{execute, level_fn, ExecutionTrace, Horizon, HybridState, HybridSystem};
use hybrid_orbit::numerics::linalg;
use hybrid_orbit::numerics::ode::IntegratorOptions;
use hybrid_orbit::poincare::{
    ball_samples, find_periodic_orbit, spectral_summary, summarize_jacobian, PeriodicOrbit,
    PoincareMapHandle, ReturnMap, Section,
};
use hybrid_orbit::reduction::{analyze_reduction, PhaseMap, ReductionOptions};
use hybrid_orbit::Error;
use serde_json::{json, Map, Value};

use crate::config::{RunConfig, SectionSpec};
use crate::error::{invalid, CliError, CliResult};
use crate::plot::{Chart, Series};
use crate::registry::{lookup, read_inputs, write_inputs, Built, ModelEntry};
use crate::report::{table_csv, trace_csv, OutDir, SCHEMA_VERSION};
use crate::RunArgs;

pub struct Context {
    pub cfg: RunConfig,
    pub entry: &'static ModelEntry,
    pub params: Value,
    pub built: Built,
    pub opts: IntegratorOptions,
    pub seed: u64,
    pub plot: bool,
    pub out: OutDir,
}

impl Context {
    pub fn new(args: &RunArgs) -> CliResult<Context> {
        let cfg = RunConfig::load(&args.config)?;
        let entry = lookup(&cfg.model)?;
        let params = entry.params(&cfg.params)?;
        let built = entry.build(&params)?;
        let opts = cfg.integrator(&built.opts)?;
        opts.validate()?;
        let seed = args.seed.unwrap_or(cfg.seed);
        let out = OutDir::prepare(&args.out)?;
        Ok(Context {
            cfg,
            entry,
            params,
            built,
            opts,
            seed,
            plot: args.plot,
            out,
        })
    }

    fn header(&self, command: &str) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
        m.insert("command".into(), json!(command));
        m.insert("model".into(), json!(self.entry.name));
        m.insert("params".into(), self.params.clone());
        m.insert("seed".into(), json!(self.seed));
        m
    }

    fn start(&self) -> HybridState {
        self.cfg
            .initial
            .as_ref()
            .map(|i| i.state())
            .unwrap_or_else(|| self.built.start.clone())
    }

    fn finish(&mut self, name: &str, mut doc: Map<String, Value>, extra: Value) -> CliResult<()> {
        if let Value::Object(e) = extra {
            doc.extend(e);
        }
        self.out.write_json(name, &Value::Object(doc))
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
        let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
        let bytes = table_csv(name, &header, rows)?;
        self.out.write(name, &bytes)
    }

    fn plot(&mut self, name: &str, chart: Chart) -> CliResult<()> {
        if self.plot {
            self.out.write(name, chart.render().as_bytes())?;
        }
        Ok(())
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn wrap(a: f64) -> f64 {
    let d = linalg::rem_euclid(a, TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

pub fn simulate(ctx: &mut Context) -> CliResult<()> {
    let hz = ctx
        .cfg
        .horizon
        .ok_or_else(|| invalid("simulate needs a horizon"))?;
    if !(hz.time >= 0.0) {
        return Err(invalid("horizon time must be non-negative"));
    }
    let horizon = match hz.events {
        Some(n) => Horizon::events(n, hz.time),
        None => Horizon::time(hz.time),
    };
    let sys = ctx.built.system.clone();
    let tr = execute(&sys, &ctx.start(), horizon, &ctx.opts)?;
    ctx.out.write("trace.csv", &trace_csv(&sys, &tr)?)?;
    let events: Vec<Value> = tr
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            json!({
                "index": i,
                "time": e.time,
                "guard": e.guard,
                "guard_name": sys.guards[e.guard].name,
                "from": e.from,
                "to": e.to,
                "pre": e.pre,
                "post": e.post,
            })
        })
        .collect();
    let doc = ctx.header("simulate");
    let extra = json!({
        "start": to_json(&ctx.start()),
        "horizon": { "time": hz.time, "events": hz.events },
        "stop": to_json(&tr.stop),
        "final_time": tr.final_time,
        "final_state": to_json(&tr.final_state),
        "event_count": events.len(),
        "events": events,
    });
    ctx.finish("events.json", doc, extra)?;
    ctx.plot("trace.svg", trace_chart(&sys, &tr))
}

fn trace_chart(sys: &HybridSystem, tr: &ExecutionTrace) -> Chart {
    let n = sys.domains.iter().map(|d| d.dim).max().unwrap_or(0);
    let mut c = Chart::new(&format!("{} trace", sys.name), "t", "state");
    for i in 0..n {
        let pts: Vec<(f64, f64)> = tr
            .segments
            .iter()
            .filter(|s| i < s.dim)
            .flat_map(|s| (0..s.len()).map(move |k| (s.t[k], s.knot(k)[i])))
            .collect();
        c.push(Series::line(format!("x_{}", i + 1), pts));
    }
    c
}

/// Return map on the configured section and the starting point of the orbit search.
fn section_handle(
    sys: &Arc<HybridSystem>,
    spec: &SectionSpec,
    opts: &IntegratorOptions,
) -> CliResult<(PoincareMapHandle, Vec<f64>)> {
    let base = spec.base_point.as_ref().ok_or(CliError::MissingBasePoint)?;
    let sec = match (spec.guard, spec.domain, spec.coordinate) {
        (Some(g), None, None) => {
            let guard = sys
                .guards
                .get(g)
                .ok_or_else(|| invalid(format!("section guard {g} does not exist")))?;
            check_dim(sys, guard.domain, base)?;
            Section::guard(sys, g, base)?
        }
        (None, Some(d), Some(c)) => {
            check_dim(sys, d, base)?;
            if c >= base.len() {
                return Err(invalid(format!("section coordinate {c} is out of range")));
            }
            let v = spec.value;
            Section::level(sys, d, level_fn(move |x| x[c] - v), spec.direction, base)?
        }
        _ => {
            return Err(invalid(
                "section needs either `guard` or both `domain` and `coordinate`",
            ))
        }
    };
    let mut h = PoincareMapHandle::new(sys.clone(), sec).with_options(opts.clone());
    if let Some(seq) = &spec.sequence {
        if let Some(g) = seq.iter().find(|g| **g >= sys.guards.len()) {
            return Err(invalid(format!("sequence names unknown guard {g}")));
        }
        h = h.strict(seq.clone());
    }
    let guess = match &spec.guess {
        Some(g) if g.len() != h.dim() => {
            return Err(invalid(format!(
                "section guess needs {} coordinates",
                h.dim()
            )))
        }
        Some(g) => g.clone(),
        None => h.coords(base),
    };
    Ok((h, guess))
}

fn check_dim(sys: &HybridSystem, domain: usize, x: &[f64]) -> CliResult<()> {
    let d = sys
        .domains
        .get(domain)
        .ok_or_else(|| invalid(format!("domain {domain} does not exist")))?;
    if d.dim != x.len() {
        return Err(invalid(format!(
            "base point has {} entries, domain {domain} has dimension {}",
            x.len(),
            d.dim
        )));
    }
    Ok(())
}

fn orbit(ctx: &Context) -> CliResult<(PoincareMapHandle, PeriodicOrbit)> {
    let spec = ctx.cfg.section()?;
    let (h, guess) = section_handle(&ctx.built.system, spec, &ctx.opts)?;
    let o = find_periodic_orbit(&h, &guess)?;
    Ok((h, o))
}

pub fn analyze_poincare(ctx: &mut Context) -> CliResult<()> {
    let (h, o) = orbit(ctx)?;
    let s = spectral_summary(&h, &o.coords, ctx.cfg.analysis.rank_tol)?;
    let mut chart = Chart::new("singular values of DP^k", "k", "singular value").log_y();
    for i in 0..s.dim {
        let pts = s
            .singular_values
            .iter()
            .enumerate()
            .filter_map(|(k, sv)| sv.get(i).map(|v| ((k + 1) as f64, *v)))
            .collect();
        chart.push(Series::dots(format!("s_{}", i + 1), pts));
    }
    let extra = json!({ "orbit": to_json(&o), "multipliers": to_json(&s.eigenvalues), "summary": to_json(&s) });
    let doc = ctx.header("analyze poincare");
    ctx.finish("poincare.json", doc, extra)?;
    ctx.plot("poincare.svg", chart)
}

pub fn analyze_reduce(ctx: &mut Context) -> CliResult<()> {
    let (h, o) = orbit(ctx)?;
    let a = &ctx.cfg.analysis;
    let opts = ReductionOptions {
        radius: a.radius,
        n_samples: a.samples,
        seed: ctx.seed,
        rank_tol: a.rank_tol,
        magnitude: a.magnitude,
        cycles: a.cycles,
    };
    let rep = analyze_reduction(&h, &o.coords, &opts)?;
    let mut chart = Chart::new("deviation from the orbit", "cycle", "norm").log_y();
    for (name, v) in [
        ("total", &rep.profile.total),
        ("transverse", &rep.profile.transverse),
        ("tangential", &rep.profile.tangential),
    ] {
        chart.push(Series::line(
            name,
            v.iter().enumerate().map(|(k, x)| (k as f64, *x)).collect(),
        ));
    }
    let extra = json!({ "orbit": to_json(&o), "verdict": to_json(&rep.verdict), "r": rep.r, "report": to_json(&rep) });
    let p = &rep.profile;
    let rows: Vec<Vec<f64>> = (0..p.total.len())
        .map(|k| {
            vec![
                k as f64,
                p.total[k],
                p.transverse.get(k).copied().unwrap_or(f64::NAN),
                p.tangential.get(k).copied().unwrap_or(f64::NAN),
            ]
        })
        .collect();
    let doc = ctx.header("analyze reduce");
    ctx.finish("reduction.json", doc, extra)?;
    ctx.table(
        "profile.csv",
        &["cycle", "total", "transverse", "tangential"],
        &rows,
    )?;
    ctx.plot("reduction.svg", chart)
}

pub fn analyze_phase(ctx: &mut Context) -> CliResult<()> {
    let (h, o) = orbit(ctx)?;
    let mut pm = PhaseMap::build(&h, &o)?;
    pm.opts = ctx.opts.clone();
    let a = ctx.cfg.analysis.clone();
    let mut checks = Vec::new();
    let mut pts = Vec::new();
    for i in 0..a.phase_points {
        let theta = TAU * i as f64 / a.phase_points as f64;
        let ph = pm.phase_of(&pm.orbit_point(theta), pm.settle_cycles)?;
        checks.push(json!({ "theta": theta, "phase": ph, "error": wrap(ph - theta) }));
        pts.push((theta, linalg::rem_euclid(ph, TAU)));
    }
    let iso = pm.isochron_sample(0.0, a.isochron_points, a.isochron_radius, ctx.seed)?;
    let mut isochron = Vec::new();
    let mut iso_rows = Vec::new();
    for (i, s) in iso.iter().enumerate() {
        let ph = wrap(pm.phase_of(s, pm.settle_cycles)?);
        isochron.push(json!({ "state": to_json(s), "phase": ph }));
        let mut row = vec![i as f64, s.domain as f64];
        row.extend(&s.x);
        row.push(ph);
        iso_rows.push(row);
    }
    let dim = iso.iter().map(|s| s.x.len()).max().unwrap_or(0);
    let mut iso_header = vec!["index".to_string(), "domain_id".to_string()];
    iso_header.extend((1..=dim).map(|i| format!("x_{i}")));
    iso_header.push("phase".into());
    let mut chart = Chart::new("asymptotic phase along the orbit", "theta", "phase");
    chart.push(Series::line("identity", vec![(0.0, 0.0), (TAU, TAU)]));
    chart.push(Series::dots("phase", pts));
    let extra = json!({ "orbit": to_json(&o), "period": pm.period, "orbit_phases": checks, "isochron": isochron });
    let doc = ctx.header("analyze phase");
    ctx.finish("phase.json", doc, extra)?;
    let bytes = table_csv("isochron.csv", &iso_header, &iso_rows)?;
    ctx.out.write("isochron.csv", &bytes)?;
    ctx.plot("phase.svg", chart)
}

fn family(entry: &'static ModelEntry, params: &Value, names: &[String]) -> SystemFamily {
    let base = params.clone();
    let names = names.to_vec();
    Arc::new(move |th: &[f64]| {
        let v = write_inputs(&base, &names, th).map_err(core_error)?;
        let sys = entry.build(&v).map_err(core_error)?.system;
        Ok(Arc::try_unwrap(sys).unwrap_or_else(|a| (*a).clone()))
    })
}

fn core_error(e: CliError) -> Error {
    match e {
        CliError::Model(e) => e,
        other => Error::InvalidInput(other.to_string()),
    }
}

fn synth(map: &HybridControlledMap, k: usize) -> hybrid_orbit::Result<DeadbeatLaw> {
    if k == 1 {
        synth_deadbeat_onecycle(map, None)
    } else {
        synth_deadbeat_multicycle(map, k)
    }
}

pub fn control_deadbeat(ctx: &mut Context) -> CliResult<()> {
    let c = ctx.cfg.control.clone();
    if c.inputs.is_empty() {
        return Err(invalid(
            "control deadbeat needs at least one input parameter",
        ));
    }
    let theta = read_inputs(&ctx.params, &c.inputs)?;
    let (h, o) = orbit(ctx)?;
    let n = o.coords.len();
    let map = HybridControlledMap::new(
        family(ctx.entry, &ctx.params, &c.inputs),
        h,
        o.coords.clone(),
        theta.clone(),
    );
    let max = c.max_cycles.unwrap_or(n.max(1));
    let range: Vec<usize> = match c.cycles {
        Some(0) => return Err(invalid("cycles must be at least 1")),
        Some(k) => vec![k],
        None => (1..=max).collect(),
    };
    let mut attempts = Vec::new();
    let mut law = None;
    for k in range {
        match synth(&map, k) {
            Ok(l) => {
                attempts.push(json!({ "cycles": k, "status": "ok" }));
                law = Some(l);
                break;
            }
            Err(Error::RankDeficient {
                achieved,
                required,
                k,
            }) => {
                attempts.push(json!({ "cycles": k, "status": "rank_deficient", "achieved_rank": achieved, "required_rank": required }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let doc = ctx.header("control deadbeat");
    let base = json!({ "inputs": c.inputs, "nominal_theta": theta, "xi": o.coords, "period": o.period, "attempts": attempts });
    let Some(law) = law else {
        // Look further out for a horizon that works, without building the law.
        let from = c.cycles.map(|k| k + 1).unwrap_or(max + 1);
        let upto = c.max_cycles.unwrap_or(n.max(1)).max(from);
        let recommended = (from..=upto).find(|&k| synth(&map, k).is_ok());
        let achieved = attempts
            .last()
            .and_then(|a| a.get("achieved_rank"))
            .cloned()
            .unwrap_or(Value::Null);
        let message = match recommended {
            Some(k) => format!(
                "the target is out of reach (achieved rank {achieved}); use a {k}-cycle law"
            ),
            None => format!("no law found up to {upto} cycles (achieved rank {achieved})"),
        };
        let mut extra = base;
        extra["status"] = json!("rank_deficient");
        extra["recommendation"] =
            json!({ "cycles": recommended, "achieved_rank": achieved, "message": message });
        return ctx.finish("deadbeat.json", doc, extra);
    };
    let pts = ball_samples(&o.coords, c.radius, c.samples, ctx.seed);
    let res = deadbeat_residuals(&map, &law, &pts)?;
    let cl = ClosedLoopMap::new(&map, &law);
    let j = cl.jacobian(&o.coords)?;
    let s = summarize_jacobian(&j, cl.min_domain_dim(), ctx.cfg.analysis.rank_tol)?;
    let table: Vec<Value> = pts
        .iter()
        .zip(&res)
        .map(|(p, r)| json!({ "point": p, "residual": r }))
        .collect();
    let max_res = res.iter().copied().fold(0.0, f64::max);
    let mut chart = Chart::new("deadbeat residuals", "sample", "|P(x, psi(x)) - xi|").log_y();
    chart.push(Series::dots(
        "residual",
        res.iter()
            .enumerate()
            .map(|(i, r)| (i as f64, *r))
            .collect(),
    ));
    let mut extra = base;
    extra["status"] = json!("ok");
    extra["law"] = json!({ "kind": format!("{:?}", law.kind), "cycles": law.horizon() });
    extra["residuals"] = json!(table);
    extra["max_residual"] = json!(max_res);
    extra["closed_loop"] = json!({
        "jacobian": s.jacobian,
        "multipliers": to_json(&s.eigenvalues),
        "ranks": s.ranks,
        "nilpotent_index": s.nilpotent_index,
    });
    ctx.finish("deadbeat.json", doc, extra)?;
    let mut header = vec!["index".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.push("residual".into());
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .zip(&res)
        .enumerate()
        .map(|(i, (p, r))| {
            std::iter::once(i as f64)
                .chain(p.iter().copied())
                .chain([*r])
                .collect()
        })
        .collect();
    let bytes = table_csv("residuals.csv", &header, &rows)?;
    ctx.out.write("residuals.csv", &bytes)?;
    ctx.plot("deadbeat.svg", chart)
}

pub fn control_embed(ctx: &mut Context) -> CliResult<()> {
    let emb = ctx
        .built
        .embedding
        .clone()
        .ok_or_else(|| invalid("control embed needs the polyped model"))?;
    let c = ctx.cfg.control.clone();
    if c.steps == 0 || c.samples_per_step < 2 {
        return Err(invalid(
            "control embed needs steps >= 1 and samples_per_step >= 2",
        ));
    }
    let x0 = ctx.start();
    let closed = emb.run(&x0, c.steps)?;
    let template = emb.template_run(&x0, c.steps)?;
    let dev = body_deviation(&closed, &template, c.samples_per_step)?;
    let table: Vec<Vec<f64>> = closed
        .events
        .iter()
        .zip(&template.events)
        .enumerate()
        .map(|(i, (a, b))| {
            vec![
                (i + 1) as f64,
                a.time,
                b.time,
                (a.time - b.time).abs(),
                linalg::dist(&a.pre[..6], &b.pre),
            ]
        })
        .collect();
    const EMBED_COLUMNS: [&str; 5] = [
        "step",
        "closed_time",
        "template_time",
        "time_error",
        "body_error",
    ];
    let rows: Vec<Value> = table
        .iter()
        .map(|r| {
            Value::Object(
                EMBED_COLUMNS
                    .iter()
                    .zip(r)
                    .map(|(k, v)| {
                        let v = if *k == "step" {
                            json!(*v as u64)
                        } else {
                            json!(v)
                        };
                        (k.to_string(), v)
                    })
                    .collect(),
            )
        })
        .collect();
    let mut chart = Chart::new("body heading", "t", "theta");
    for (name, tr) in [("polyped", &closed), ("template", &template)] {
        let pts = tr
            .segments
            .iter()
            .flat_map(|s| (0..s.len()).map(move |k| (s.t[k], s.knot(k)[2])))
            .collect();
        chart.push(Series::line(name, pts));
    }
    let doc = ctx.header("control embed");
    let extra = json!({
        "legs": emb.legs(),
        "steps": c.steps,
        "allocation_condition": emb.allocation_condition(),
        "max_deviation": dev,
        "table": rows,
        "final_limbs": closed.final_state.x[6..].to_vec(),
    });
    ctx.finish("embed.json", doc, extra)?;
    ctx.table("embed.csv", &EMBED_COLUMNS, &table)?;
    ctx.plot("embed.svg", chart)
}
