//! One function per subcommand: load inputs, call the library, collect
//! artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use bellman_core::dyadic::{calibrate_cd, default_n_max, empirical_rate, multiscale_bound, random_pair, DyadicSpec};
use bellman_core::gauge::axioms::{audit_gauge_axioms, AxiomConfig};
use bellman_core::gauge::bp::{borwein_preiss, verify_borwein_preiss, CandidateSet};
use bellman_core::gauge::{calibrate_derivative_constant, GaugePoint, GaugeSpec};
use bellman_core::measures::EmpiricalMeasure;
use bellman_core::mfc::ito::{heat_cos_candidate, mean_candidate, second_moment_candidate};
use bellman_core::mfc::{
    constant_policies, dpp_check, eps_gap_experiment, ito_check, lipschitz_check, mollify, registry, reward, simulate,
    threshold_policies, value_policy_search, CandidateFunction, CoefficientSet, GaugeCandidate, MollifyConfig, Policy, SimParams,
};
use bellman_core::nplayer::{
    chaos_experiment, derivative_bounds_check, master_residual, solve_hjb, ChaosParams, GridParams, LiftedValue, Scheme, ValueGrid,
};
use bellman_core::transport::{w2_exact, w2_smoothed, SamplingBudget};

use crate::cli::*;
use crate::defaults;
use crate::output::{CliError, CliResult, Outcome};
use crate::plot::emit_plot_data;

pub fn execute(cmd: &Command) -> CliResult<Outcome> {
    match cmd {
        Command::Run(_) => Err(CliError::Config("`run` cannot be nested".into())),
        Command::W2(a) => w2(a),
        Command::Bound(a) => bound(a),
        Command::Rate(a) => rate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::GaugeCheck(a) => gauge_check(a),
        Command::Bp(a) => bp(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Value(a) => value(a),
        Command::EpsGap(a) => eps_gap(a),
        Command::DppCheck(a) => dpp(a),
        Command::LipCheck(a) => lip(a),
        Command::ItoCheck(a) => ito(a),
        Command::HjbSolve(a) => hjb(a),
        Command::Chaos(a) => chaos(a),
        Command::Residual(a) => residual(a),
        Command::Plot(a) => plot(a),
    }
}

#[derive(Deserialize)]
struct MeasureDoc {
    d: Option<usize>,
    points: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl MeasureDoc {
    fn build(&self) -> CliResult<EmpiricalMeasure> {
        let m = EmpiricalMeasure::from_points(&self.points, self.weights.as_deref())?;
        if let Some(d) = self.d.filter(|&d| d != m.dim()) {
            return Err(CliError::Config(format!("measure declares d = {d} but has {}-dimensional points", m.dim())));
        }
        Ok(m)
    }
}

#[derive(Deserialize)]
struct PointDoc {
    t: f64,
    mu: MeasureDoc,
}

impl PointDoc {
    fn build(&self) -> CliResult<GaugePoint> {
        Ok(GaugePoint::new(self.t, self.mu.build()?))
    }
}

#[derive(Deserialize)]
struct GaugePairDoc {
    p: PointDoc,
    q: PointDoc,
}

#[derive(Deserialize)]
struct MeasurePairDoc {
    mu: MeasureDoc,
    nu: MeasureDoc,
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_measure(path: &Path, dim: Option<usize>) -> CliResult<EmpiricalMeasure> {
    EmpiricalMeasure::load(path, dim).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_spec(path: &Path) -> CliResult<GaugeSpec> {
    read_json(path)
}

fn coefficients(c: &CoeffArgs) -> CliResult<CoefficientSet> {
    let overrides: BTreeMap<String, f64> = c.overrides.iter().cloned().collect();
    Ok(registry(&c.key, &overrides)?)
}

/// Constant policies, plus bang-bang switches between the first and last
/// control at each threshold.
fn policies(coeffs: &CoefficientSet, p: &PolicyArgs) -> CliResult<Vec<Policy>> {
    let k = coeffs.controls.len();
    let mut out = constant_policies(k);
    if !p.thresholds.is_empty() {
        if k < 2 {
            return Err(CliError::Config("threshold policies need at least two controls".into()));
        }
        for &c in &p.thresholds {
            out.extend(threshold_policies(0, k - 1, &[c], (c - 1.0, c + 1.0), 2)?);
        }
    }
    Ok(out)
}

fn sim_params(s: &SimArgs) -> SimParams {
    SimParams::new(s.particles, s.steps, s.eps, s.seed)
}

#[derive(Serialize)]
struct W2Result {
    method: &'static str,
    w2: f64,
    w2_squared: f64,
    stderr: f64,
}

fn w2(a: &W2Args) -> CliResult<Outcome> {
    let mu = load_measure(&a.mu, a.dim)?;
    let nu = load_measure(&a.nu, a.dim)?;
    let mut out = Outcome::default();
    let res = match a.rho {
        Some(rho) => {
            let seed = a.seed.ok_or_else(|| CliError::Config("the smoothed distance needs --seed".into()))?;
            if a.plan.is_some() {
                return Err(CliError::Config("plans are only available for the exact distance".into()));
            }
            let e = w2_smoothed(&mu, &nu, rho, SamplingBudget { samples: a.samples, reps: a.reps }, seed)?;
            W2Result { method: "smoothed", w2: e.value, w2_squared: e.value * e.value, stderr: e.stderr }
        }
        None => {
            let (w, plan) = w2_exact(&mu, &nu)?;
            if let Some(name) = &a.plan {
                out.artifacts.add(name.clone(), plan.to_csv());
            }
            W2Result { method: "exact", w2: w, w2_squared: w * w, stderr: 0.0 }
        }
    };
    out.summary = format!("W2 = {:.12} ({})", res.w2, res.method);
    out.artifacts.json("w2.json", &res)?;
    Ok(out)
}

#[derive(Serialize)]
struct BoundResult {
    partial_sum: f64,
    tail_bound: f64,
    total: f64,
    c_d: f64,
    n_max: u32,
    l_max: u32,
    w2_squared: Option<f64>,
    holds: Option<bool>,
}

fn bound(a: &BoundArgs) -> CliResult<Outcome> {
    let mu = load_measure(&a.mu, a.dim)?;
    let nu = load_measure(&a.nu, a.dim)?;
    let radius = mu.support_sup_radius().max(nu.support_sup_radius());
    let spec = DyadicSpec { c_d: a.cd, n_max: a.nmax.unwrap_or_else(|| default_n_max(radius)), l_max: a.lmax.unwrap_or(10) };
    let (rep, w2sq) = match a.rho {
        Some(rho) => (multiscale_bound(&mu.smoothed(rho)?, &nu.smoothed(rho)?, &spec)?, None),
        None => {
            let (w, _) = w2_exact(&mu, &nu)?;
            (multiscale_bound(&mu, &nu, &spec)?, Some(w * w))
        }
    };
    let holds = w2sq.map(|w| rep.total() >= w);
    let res = BoundResult {
        partial_sum: rep.partial_sum,
        tail_bound: rep.tail_bound,
        total: rep.total(),
        c_d: rep.c_d,
        n_max: rep.n_max,
        l_max: rep.l_max,
        w2_squared: w2sq,
        holds,
    };
    let mut out = Outcome::default();
    out.constant("c_d", a.cd);
    out.summary = format!("bound {:.6e} (partial {:.6e}, tail {:.6e})", res.total, res.partial_sum, res.tail_bound);
    out.artifacts.json("bound.json", &res)?;
    if holds == Some(false) {
        out.fail("multiscale bound below W2^2", &res);
    }
    Ok(out)
}

fn rate(a: &RateArgs) -> CliResult<Outcome> {
    let mu = load_measure(&a.measure.mu, a.measure.dim)?;
    let table = match a.rho {
        Some(r) => empirical_rate(&mu.smoothed(r)?, &a.sizes, a.reps, a.seed, a.reference_size)?,
        None => empirical_rate(&mu, &a.sizes, a.reps, a.seed, a.reference_size)?,
    };
    let mut out = Outcome::default();
    out.summary = format!("log-log slope {:.4}", table.slope);
    out.artifacts.add("rate.csv", table.to_csv());
    out.artifacts.json("rate.json", &table)?;
    Ok(out)
}

fn calibrate(a: &CalibrateArgs) -> CliResult<Outcome> {
    let c = calibrate_cd(a.d, a.instances, a.seed)?;
    let mut out = Outcome::default();
    out.constant("c_d", c.c_d);
    out.summary = format!("c_d = {:.6} (d = {}, max ratio {:.6})", c.c_d, c.d, c.max_ratio);
    out.artifacts.json("calibration.json", &c)?;
    if let Some(bandwidth) = a.bandwidth {
        let spec = GaugeSpec { bandwidth, c_d: 1.0, n_max: 3, l_max: 6, horizon: 1.0 };
        spec.validate(a.d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0xd1b5_4a32_d192_ed03);
        let pairs: Vec<_> = (0..a.derivative_pairs)
            .map(|_| {
                let (mu, nu) = random_pair(&mut rng, a.d);
                (GaugePoint::new(0.0, mu), GaugePoint::new(0.0, nu))
            })
            .collect();
        let points: Vec<Vec<f64>> = (0..7).map(|k| vec![-3.0 + k as f64; a.d]).collect();
        let dc = calibrate_derivative_constant(&spec, &pairs, &points)?;
        out.constant("C_d", dc.first.max(dc.second));
        out.summary += &format!(", C_d = {:.6}", dc.first.max(dc.second));
        out.artifacts.json("derivative_calibration.json", &dc)?;
    }
    Ok(out)
}

fn gauge_check(a: &GaugeCheckArgs) -> CliResult<Outcome> {
    let spec = load_spec(&a.spec)?;
    let docs: Vec<GaugePairDoc> = read_json(&a.pairs)?;
    let pairs: Vec<(GaugePoint, GaugePoint)> = docs.iter().map(|d| Ok((d.p.build()?, d.q.build()?))).collect::<CliResult<_>>()?;
    let cfg = AxiomConfig { eps_grid: a.eps.clone(), ..AxiomConfig::default() };
    let report = audit_gauge_axioms(&spec, &pairs, &cfg)?;
    let mut out = Outcome::default();
    out.constant("c_d", spec.c_d);
    out.tolerance("continuity", cfg.continuity_tol);
    out.summary = format!("{} pairs, {} violations", report.pairs, report.violations.len());
    out.artifacts.json("gauge_check.json", &report)?;
    if let Some(w) = report.violations.first() {
        out.fail(format!("gauge axiom ({}) violated on pair {}", w.axiom, w.pair), w);
    }
    Ok(out)
}

#[derive(Serialize)]
struct BpOutput {
    tilde: usize,
    sequence: Vec<usize>,
    anchors: Vec<(usize, f64)>,
    bandwidth: f64,
    item_i: bool,
    item_ii: bool,
    item_iii: bool,
}

#[derive(Deserialize)]
struct GRow {
    g: f64,
}

fn bp(a: &BpArgs) -> CliResult<Outcome> {
    let base = load_spec(&a.spec)?;
    let docs: Vec<PointDoc> = read_json(&a.candidates)?;
    let cands = CandidateSet::new(docs.iter().map(PointDoc::build).collect::<CliResult<_>>()?)?;
    let text = read_text(&a.g)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let g: Vec<f64> = rdr
        .deserialize::<GRow>()
        .map(|r| r.map(|r| r.g))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", a.g.display())))?;
    let res = borwein_preiss(&cands, &g, a.lambda, a.delta, a.start, &base)?;
    let ver = verify_borwein_preiss(&cands, &g, a.lambda, a.delta, &res)?;
    let doc = BpOutput {
        tilde: res.tilde,
        sequence: res.sequence.clone(),
        anchors: res.perturbation.anchors.clone(),
        bandwidth: res.perturbation.spec.bandwidth,
        item_i: ver.item_i,
        item_ii: ver.item_ii,
        item_iii: ver.item_iii,
    };
    let mut out = Outcome::default();
    out.constant("c_d", base.c_d);
    out.summary = format!("maximiser {} after {} iterations", res.tilde, res.sequence.len());
    out.artifacts.json("bp.json", &doc)?;
    if !ver.all() {
        out.fail("Borwein-Preiss conclusions not verified", &doc);
    }
    Ok(out)
}

fn simulate_cmd(a: &SimulateArgs) -> CliResult<Outcome> {
    let coeffs = coefficients(&a.coeffs)?;
    let mu = load_measure(&a.measure.mu, a.measure.dim)?;
    if a.control >= coeffs.controls.len() {
        return Err(CliError::Config(format!("control {} out of range ({} controls)", a.control, coeffs.controls.len())));
    }
    let path = simulate(&coeffs, &Policy::Constant(a.control), a.t, &mu, &sim_params(&a.sim))?;
    let est = reward(&coeffs, &path);
    let d = path.dim;
    let mut csv = String::from("t");
    for k in 0..d {
        csv += &format!(",mean_{k}");
    }
    for k in 0..d {
        csv += &format!(",var_{k}");
    }
    csv += "\n";
    for (k, t) in path.times.iter().enumerate() {
        csv += &format!("{t:.15e}");
        for v in path.measure(k).mean().iter().chain(&path.variance(k)) {
            csv += &format!(",{v:.15e}");
        }
        csv += "\n";
    }
    let mut out = Outcome::default();
    out.summary = format!("reward {:.6} +- {:.2e}", est.value, est.stderr);
    out.artifacts.add("path.csv", csv);
    out.artifacts.json("reward.json", &est)?;
    Ok(out)
}

fn value(a: &ValueArgs) -> CliResult<Outcome> {
    let coeffs = coefficients(&a.coeffs)?;
    let mu = load_measure(&a.measure.mu, a.measure.dim)?;
    let res = value_policy_search(&coeffs, a.t, &mu, &policies(&coeffs, &a.policies)?, &sim_params(&a.sim))?;
    let mut out = Outcome::default();
    out.summary = format!("value {:.6} +- {:.2e} (policy {})", res.value.value, res.value.stderr, res.best);
    out.artifacts.json("value.json", &res)?;
    Ok(out)
}

fn eps_gap(a: &EpsGapArgs) -> CliResult<Outcome> {
    let coeffs = coefficients(&a.coeffs)?;
    let mu = load_measure(&a.measure.mu, a.measure.dim)?;
    let tab = eps_gap_experiment(&coeffs, a.t, &mu, &a.eps_list, &policies(&coeffs, &a.policies)?, &sim_params(&a.sim))?;
    let mut out = Outcome::default();
    out.constant("L", tab.path_constant);
    out.tolerance("envelope", tab.envelope);
    out.summary = format!("gap constant {:.4}, slope {:.3}, envelope {:.4}", tab.gap_constant, tab.slope, tab.envelope);
    out.artifacts.add("eps_gap.csv", tab.to_csv());
    out.artifacts.json("eps_gap.json", &tab)?;
    if !tab.within_envelope {
        out.fail("value gaps exceed the linear envelope", &tab);
    }
    Ok(out)
}

fn dpp(a: &DppArgs) -> CliResult<Outcome> {
    let coeffs = coefficients(&a.coeffs)?;
    let mu = load_measure(&a.measure.mu, a.measure.dim)?;
    let s = a.s.unwrap_or(0.5 * (a.t + coeffs.horizon));
    let rep = dpp_check(&coeffs, a.t, s, &mu, &policies(&coeffs, &a.policies)?, &sim_params(&a.sim))?;
    let mut out = Outcome::default();
    out.tolerance("dpp", rep.tolerance);
    out.summary = format!("one-stage {:.6}, two-stage {:.6}, tolerance {:.2e}", rep.one_stage.value, rep.two_stage.value, rep.tolerance);
    out.artifacts.json("dpp.json", &rep)?;
    if !rep.holds {
        out.fail("dynamic programming identity outside tolerance", &rep);
    }
    Ok(out)
}

fn lip(a: &LipArgs) -> CliResult<Outcome> {
    let coeffs = coefficients(&a.coeffs)?;
    let docs: Vec<MeasurePairDoc> = read_json(&a.pairs)?;
    let pairs: Vec<_> = docs.iter().map(|d| Ok((d.mu.build()?, d.nu.build()?))).collect::<CliResult<_>>()?;
    let rep = lipschitz_check(&coeffs, a.t, &pairs, &policies(&coeffs, &a.policies)?, &sim_params(&a.sim), a.bound)?;
    let mut out = Outcome::default();
    out.constant("L", rep.max_ratio);
    if let Some(b) = a.bound {
        out.tolerance("lipschitz", b);
    }
    out.summary = format!("max ratio {:.4}", rep.max_ratio);
    out.artifacts.json("lipschitz.json", &rep)?;
    if !rep.violations.is_empty() {
        out.fail(format!("{} pairs exceed the Lipschitz bound", rep.violations.len()), &rep);
    }
    Ok(out)
}

fn ito(a: &ItoArgs) -> CliResult<Outcome> {
    let mu = load_measure(&a.measure.mu, a.measure.dim)?;
    let d = mu.dim();
    if a.beta.len() != d || a.theta.is_empty() || a.theta.len() % d != 0 {
        return Err(CliError::Config(format!("--beta needs {d} entries and --theta a multiple of {d}")));
    }
    let m = a.theta.len() / d;
    let theta: Vec<Vec<f64>> = a.theta.chunks(m).map(<[f64]>::to_vec).collect();
    let gauge;
    let fnc;
    let u: &dyn CandidateFunction = match a.candidate {
        CandidateKind::Gauge => {
            let spec = load_spec(a.spec.as_deref().ok_or_else(|| CliError::Config("the gauge candidate needs --spec".into()))?)?;
            let anchor = a.anchor.as_deref().ok_or_else(|| CliError::Config("the gauge candidate needs --anchor".into()))?;
            gauge = GaugeCandidate { anchor: GaugePoint::new(a.anchor_t, load_measure(anchor, a.measure.dim)?), spec };
            &gauge
        }
        kind => {
            fnc = match kind {
                CandidateKind::Mean => mean_candidate(d, 0),
                CandidateKind::SecondMoment => second_moment_candidate(d),
                _ => heat_cos_candidate(a.horizon),
            };
            &fnc
        }
    };
    let rep = ito_check(u, &a.beta, &theta, a.t, a.s, &mu, a.particles, a.steps, a.seed)?;
    let mut out = Outcome::default();
    out.summary = format!("increment {:.6e}, integral {:.6e}, residual {:.3e}", rep.increment, rep.integral, rep.residual);
    out.artifacts.json("ito.json", &rep)?;
    if let Some(tol) = a.tolerance {
        out.tolerance("ito", tol);
        if rep.residual > tol {
            out.fail("Ito residual above tolerance", &rep);
        }
    }
    Ok(out)
}

fn grid_params(g: &GridArgs) -> CliResult<GridParams> {
    let mut p = GridParams {
        support: g.support,
        scheme: match g.scheme {
            SchemeArg::Explicit => Scheme::Explicit,
            SchemeArg::Implicit => Scheme::Implicit,
        },
        points: defaults::POINTS.parse().expect("numeric default"),
        ..GridParams::default()
    };
    if let Some(spec) = &g.grid {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!("--grid expects R,points,steps, got `{spec}`")));
        }
        let bad = |what: &str| CliError::Config(format!("--grid: invalid {what} in `{spec}`"));
        if parts[0] != "auto" {
            p.radius = Some(parts[0].parse().map_err(|_| bad("radius"))?);
        }
        if parts[1] != "auto" {
            p.points = parts[1].parse().map_err(|_| bad("point count"))?;
        }
        if parts[2] != "auto" {
            p.steps = Some(parts[2].parse().map_err(|_| bad("step count"))?);
        }
    }
    Ok(p)
}

fn hjb(a: &HjbArgs) -> CliResult<Outcome> {
    let coeffs = coefficients(&a.coeffs)?;
    let mo = mollify(&coeffs, a.n, a.m, MollifyConfig { nodes: a.grid.nodes, ..MollifyConfig::default() })?;
    let vg = solve_hjb(&mo, a.eps, &grid_params(&a.grid)?)?;
    let bounds = derivative_bounds_check(&vg);
    let mut bytes = Vec::new();
    vg.write_to(&mut bytes)?;
    let mut out = Outcome::default();
    out.constant("C_K", bounds.c_k);
    out.summary = format!("grid {}^{} over radius {:.3}, {} steps, C_K {:.4}", vg.header.points, vg.dims(), vg.header.radius, vg.header.steps, bounds.c_k);
    out.artifacts.add(a.out.clone(), bytes);
    out.artifacts.json("grid_header.json", &vg.header)?;
    out.artifacts.json("derivative_bounds.json", &bounds)?;
    Ok(out)
}

fn chaos(a: &ChaosArgs) -> CliResult<Outcome> {
    let coeffs = coefficients(&a.coeffs)?;
    let mu = load_measure(&a.measure.mu, a.measure.dim)?;
    let params = ChaosParams {
        grid: GridParams { support: a.support, ..GridParams::default() },
        points_per_n: a.points.clone(),
        mollify: MollifyConfig::default(),
        reference: SimParams::new(a.particles, a.steps, a.eps, a.seed),
        tolerance: a.tolerance,
    };
    let tab = chaos_experiment(&coeffs, a.t, &mu, a.eps, &a.n, &a.m, &params)?;
    let mut out = Outcome::default();
    out.tolerance("chaos", a.tolerance);
    out.summary = format!("reference {:.6} +- {:.2e}, final gap {:.4e}", tab.reference.value, tab.reference.stderr, tab.final_gap);
    out.artifacts.add("chaos.csv", tab.to_csv());
    out.artifacts.json("chaos.json", &tab)?;
    if !tab.within_tolerance {
        out.fail("finite-player value outside tolerance of the reference", &tab);
    }
    Ok(out)
}

fn residual(a: &ResidualArgs) -> CliResult<Outcome> {
    let vg = ValueGrid::load(&a.grid).map_err(|e| CliError::Config(format!("{}: {e}", a.grid.display())))?;
    let mu = load_measure(&a.measure.mu, a.measure.dim)?;
    let mut overrides: BTreeMap<String, f64> = BTreeMap::from([("horizon".to_string(), vg.header.horizon)]);
    overrides.extend(a.overrides.iter().cloned());
    let coeffs = registry(&vg.header.coefficients, &overrides)?;
    let rep = master_residual(&LiftedValue { grid: &vg }, &coeffs, a.t, &mu, vg.header.eps)?;
    let mut out = Outcome::default();
    out.summary = format!("residual {:.4e}, terminal gap {:.4e}", rep.residual, rep.terminal_gap);
    out.artifacts.json("residual.json", &rep)?;
    Ok(out)
}

fn plot(a: &PlotArgs) -> CliResult<Outcome> {
    let text = read_text(&a.table)?;
    let name = match &a.name {
        Some(n) => n.clone(),
        None => a.table.file_stem().and_then(|s| s.to_str()).unwrap_or("table").to_string(),
    };
    let p = emit_plot_data(&text, a.kind, &name)?;
    let mut out = Outcome::default();
    out.summary = format!("{name}.dat, {name}.gp");
    out.artifacts.add(format!("{name}.dat"), p.data);
    out.artifacts.add(format!("{name}.gp"), p.script);
    Ok(out)
}
