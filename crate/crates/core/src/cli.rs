//! `lyocert` command line.
//!
//! Exit codes: 0 Supported / success, 1 Refuted, 2 usage or config error,
//! 3 Inconclusive.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::classical::{certify_classical, decay_envelope, ClassicalKind, ClassicalParams};
use crate::comparison::{
    kl_majorant, verify_class, verify_kl, FunctionClass, KLFunction, Mesh, MeshInterpolant, ScalarFunction, Tabulated,
};
use crate::error::{Error, Result};
use crate::evidence::{Evidence, Status, Witness};
use crate::inference::{consistency_check, infer_closure, to_dot, Provenance, PropertyId};
use crate::integral::{certify_integral, IntegralKind, IntegralPlan, Weights};
use crate::lyapunov::{
    certify_lyapunov, construct_nclf, default_rho, verify_bellman, LyapunovPlan, NclfPolicy, VSpec,
};
use crate::sampling::class_grid;
use crate::system::{build_ensemble, check_axioms, norm, AxiomPlan, SystemConfig, SystemDef};

pub const EXIT_USAGE: i32 = 2;
/// Worker-count override for the sample fan-out.
pub const THREADS_ENV: &str = "LYOCERT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lyocert", version, about = "Sampled certification of classical and integral stability notions")]
struct Cli {
    /// Leave out timestamps so identical inputs give byte-identical reports.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check identity, cocycle, causality and continuity of a system.
    Axioms(AxiomsArgs),
    /// Certify one classical or integral stability property.
    Certify(CertifyArgs),
    /// Construct or verify a (non-coercive) Lyapunov function.
    Lyap(LyapArgs),
    /// Fit a KL bound to tabulated data or to sampled trajectory decay.
    Klfit(KlfitArgs),
    /// Close a set of properties under the implication rules.
    Infer(InferArgs),
    /// List the built-in systems.
    Catalogue,
}

#[derive(Debug, Args)]
struct AxiomsArgs {
    /// System config (JSON), or `catalogue:NAME`.
    config: String,
    /// Axiom plan (JSON).
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Defaults to 1e-12 for closed-form systems and 1e-6 otherwise.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    config: String,
    /// ULS, UAS, UGAS, UGWA, UGATT, REP, RFC, UltULS, iREP, iRFC, iULS, iUGS, iUGATT, iUGAS or UltiULS.
    #[arg(long)]
    property: String,
    /// Plan (JSON) with optional `alpha`, `psi`, `beta`, `classical`, `integral`.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Weight α as an expression in r (or a JSON function).
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    psi: Option<String>,
    /// KL bound β as an expression in r and t (or a JSON function).
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["construct", "verify"])))]
struct LyapArgs {
    config: String,
    /// Weight ρ of the construction; bounded and of class K. Default min(r, 1).
    #[arg(long)]
    rho: Option<String>,
    /// Build V̂(x) = max_d ∫₀^∞ ρ(‖φ(s, x, d)‖) ds and check it.
    #[arg(long)]
    construct: bool,
    /// Check the V described in this JSON file (`{"expr": ..}` or `{"rho": ..}`).
    #[arg(long)]
    verify: Option<PathBuf>,
    /// Decay rate; defaults to ρ for --construct and to r for --verify.
    #[arg(long)]
    alpha: Option<String>,
    /// Upper bound ψ₂; defaults to the sampled envelope of V.
    #[arg(long)]
    psi2: Option<String>,
    /// Lower bound ψ₁ of class K∞ (coercive certificate).
    #[arg(long)]
    psi1: Option<String>,
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Write V on a state grid as CSV.
    #[arg(long)]
    levels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["psi", "from_decay"])))]
struct KlfitArgs {
    /// CSV with columns r, t, psi on a full grid (t including 0).
    #[arg(long)]
    psi: Option<PathBuf>,
    /// System config whose sampled decay is enveloped.
    #[arg(long)]
    from_decay: Option<String>,
    /// Classical plan (JSON) for --from-decay.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Ladder depth for --from-decay.
    #[arg(long, default_value_t = 12)]
    levels: usize,
    /// Where to write β (JSON, usable as `beta` in plans).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    /// Comma separated property names.
    #[arg(long, value_delimiter = ',')]
    assume: Vec<String>,
    /// Directory of certify / lyap reports.
    #[arg(long)]
    certs: Option<PathBuf>,
    /// Write the rule graph as DOT.
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    configure_threads();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("run `lyocert --help` for usage");
            EXIT_USAGE
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            // fails only if a pool already exists, which is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let det = cli.deterministic;
    match &cli.command {
        Command::Axioms(a) => axioms(a, det),
        Command::Certify(a) => certify(a, det),
        Command::Lyap(a) => lyap(a, det),
        Command::Klfit(a) => klfit(a, det),
        Command::Infer(a) => infer(a, det),
        Command::Catalogue => {
            for name in crate::system::Catalogue::names() {
                println!("{name}");
            }
            Ok(0)
        }
    }
}

fn load_config(arg: &str) -> Result<SystemConfig> {
    if let Some(name) = arg.strip_prefix("catalogue:") {
        return Ok(SystemConfig::catalogue(name));
    }
    let p = Path::new(arg);
    if !p.exists() {
        return Err(Error::Config(format!("config file `{arg}` not found")));
    }
    SystemConfig::load(p)
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })
}

/// A weight given as an expression in `r` gets the strongest class that the
/// probe grid supports (K∞, K, otherwise positive definite). JSON input keeps
/// its declared class.
pub fn parse_weight(src: &str) -> Result<ScalarFunction> {
    if src.trim_start().starts_with('{') {
        return Ok(serde_json::from_str(src)?);
    }
    let f = ScalarFunction::expr(src, FunctionClass::Kinf)?;
    for class in [FunctionClass::Kinf, FunctionClass::K] {
        let g = f.clone().with_class(class);
        if verify_class(&g, &class_grid(), 1e-12)?.is_supported() {
            return Ok(g);
        }
    }
    Ok(f.with_class(FunctionClass::PositiveDefinite))
}

fn parse_kl(src: &str) -> Result<KLFunction> {
    if src.trim_start().starts_with('{') {
        return Ok(serde_json::from_str(src)?);
    }
    KLFunction::expr(src)
}

fn report(command: &str, det: bool, body: Value) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("tool".into(), json!("lyocert"));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(command));
    if !det {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        m.insert("generated_at".into(), json!(secs));
    }
    if let Value::Object(b) = body {
        m.extend(b);
    }
    Value::Object(m)
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn summary(what: &str, ev: &Evidence) {
    let margin = ev.margin.map_or(String::new(), |m| format!(" (margin {m:.3e})"));
    eprintln!("{what}: {}{margin}", ev.status);
    if let Some(w) = &ev.witness {
        eprintln!("  witness: {}", w.message);
    }
}

fn combine(statuses: impl IntoIterator<Item = Status>) -> Status {
    let mut all = Status::Supported;
    for s in statuses {
        match s {
            Status::Refuted => return Status::Refuted,
            Status::Inconclusive => all = Status::Inconclusive,
            Status::Supported => {}
        }
    }
    all
}

fn axioms(a: &AxiomsArgs, det: bool) -> Result<i32> {
    let cfg = load_config(&a.config)?;
    let sys = cfg.build()?;
    let mut plan: AxiomPlan = match &a.plan {
        Some(p) => load_json(p)?,
        None => AxiomPlan::default(),
    };
    if let Some(s) = cfg.seed {
        plan.ensemble.seed = s;
    }
    let tol = a.tol.unwrap_or(if sys.is_analytic() { 1e-12 } else { 1e-6 });
    let checks = check_axioms(&sys, &plan, tol)?;
    let status = combine(checks.iter().map(|c| c.status));
    for c in &checks {
        summary(&format!("{} {}", sys.name(), c.check), c);
    }
    let body = json!({
        "system": sys.name(),
        "config": cfg,
        "tol": tol,
        "status": status,
        "checks": checks,
    });
    emit(&report("axioms", det, body), a.out.as_deref())?;
    Ok(status.exit_code())
}

/// Plan file of `certify`: weights plus the per-family sampling plans.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyPlan {
    pub alpha: Option<ScalarFunction>,
    pub psi: Option<ScalarFunction>,
    pub beta: Option<KLFunction>,
    pub classical: ClassicalParams,
    pub integral: IntegralPlan,
}

enum Kind {
    Classical(ClassicalKind),
    Integral(IntegralKind),
}

fn parse_kind(s: &str) -> Result<Kind> {
    if let Ok(k) = s.parse::<ClassicalKind>() {
        return Ok(Kind::Classical(k));
    }
    if let Ok(k) = s.parse::<IntegralKind>() {
        return Ok(Kind::Integral(k));
    }
    let mut names: Vec<&str> = ClassicalKind::ALL.iter().map(|k| k.name()).collect();
    names.extend(IntegralKind::ALL.iter().map(|k| k.name()));
    Err(Error::InvalidArgument(format!(
        "unknown property `{s}` (expected one of {})",
        names.join(", ")
    )))
}

fn certify_with(kind: Kind, sys: &SystemDef, plan: CertifyPlan) -> Result<(PropertyId, Evidence)> {
    Ok(match kind {
        Kind::Classical(k) => {
            let mut params = plan.classical;
            if plan.beta.is_some() {
                params.beta = plan.beta;
            }
            (PropertyId::from(k), certify_classical(k, sys, &params)?)
        }
        Kind::Integral(k) => {
            let mut w = Weights::alpha(plan.alpha.unwrap_or_else(ScalarFunction::identity));
            if let Some(p) = plan.psi {
                w = w.with_psi(p);
            }
            if let Some(b) = plan.beta {
                w = w.with_beta(b);
            }
            (PropertyId::from(k), certify_integral(k, sys, &w, &plan.integral)?)
        }
    })
}

/// Certify a property given by name (classical or integral). α defaults to
/// the identity for the integral notions.
pub fn certify_property(property: &str, sys: &SystemDef, plan: CertifyPlan) -> Result<(PropertyId, Evidence)> {
    certify_with(parse_kind(property)?, sys, plan)
}

fn certify(a: &CertifyArgs, det: bool) -> Result<i32> {
    let kind = parse_kind(&a.property)?;
    let cfg = load_config(&a.config)?;
    let sys = cfg.build()?;
    let mut plan: CertifyPlan = match &a.plan {
        Some(p) => load_json(p)?,
        None => CertifyPlan::default(),
    };
    if let Some(s) = &a.alpha {
        plan.alpha = Some(parse_weight(s)?);
    }
    if let Some(s) = &a.psi {
        plan.psi = Some(parse_weight(s)?);
    }
    if let Some(s) = &a.beta {
        plan.beta = Some(parse_kl(s)?);
    }
    if let Some(s) = cfg.seed {
        plan.classical.ensemble.seed = s;
        plan.integral.ensemble.seed = s;
    }
    let (property, ev) = certify_with(kind, &sys, plan)?;
    summary(&format!("{property} on {}", sys.name()), &ev);
    let body = json!({
        "system": sys.name(),
        "config": cfg,
        "property": property,
        "status": ev.status,
        "evidence": ev,
    });
    emit(&report("certify", det, body), a.out.as_deref())?;
    Ok(ev.status.exit_code())
}

fn plan_points(sys: &SystemDef, plan: &LyapunovPlan) -> Vec<Vec<f64>> {
    let mut xs = vec![vec![0.0; sys.dimension()]];
    for &r in &plan.radii {
        xs.extend(crate::sampling::states_in_ball(sys, r, plan.ensemble.seed).into_iter().skip(1));
    }
    xs
}

/// ψ₂(r) = max of the sampled V over ‖x‖ ≤ r, linearly interpolated, with
/// the last slope (at least 1) beyond the largest radius.
fn sampled_envelope(values: &[(Vec<f64>, f64)]) -> Result<ScalarFunction> {
    let mut by_r: BTreeMap<u64, f64> = BTreeMap::new();
    for (x, v) in values {
        let e = by_r.entry(norm(x).to_bits()).or_insert(0.0);
        *e = e.max(*v);
    }
    let mut rs = vec![0.0];
    let mut vs = vec![0.0];
    for (r, v) in by_r {
        let r = f64::from_bits(r);
        if r > 0.0 {
            rs.push(r);
            vs.push(v.max(*vs.last().expect("nonempty")));
        }
    }
    // push the node values up so that the interpolant stays above the samples
    let n = rs.len();
    let slope = if n >= 2 {
        ((vs[n - 1] - vs[n - 2]) / (rs[n - 1] - rs[n - 2])).max(1.0)
    } else {
        1.0
    };
    Ok(ScalarFunction::tabulated(Tabulated::new(rs, vs, slope)?, FunctionClass::K))
}

fn level_points(dim: usize, reach: f64) -> Vec<Vec<f64>> {
    let axis = |n: usize| -> Vec<f64> { (0..n).map(|i| -reach + 2.0 * reach * i as f64 / (n - 1) as f64).collect() };
    match dim {
        2 => {
            let ax = axis(21);
            ax.iter().flat_map(|a| ax.iter().map(move |b| vec![*a, *b])).collect()
        }
        n => axis(81)
            .into_iter()
            .map(|a| {
                let mut x = vec![0.0; n];
                x[0] = a;
                x
            })
            .collect(),
    }
}

fn lyap(a: &LyapArgs, det: bool) -> Result<i32> {
    let cfg = load_config(&a.config)?;
    let sys = cfg.build()?;
    let mut plan: LyapunovPlan = match &a.plan {
        Some(p) => load_json(p)?,
        None => LyapunovPlan::default(),
    };
    if let Some(s) = cfg.seed {
        plan.ensemble.seed = s;
    }
    let mut notes = Vec::new();
    let (vspec, v, default_alpha) = if a.construct {
        let rho = match &a.rho {
            Some(s) => parse_weight(s)?,
            None => default_rho(),
        };
        let policy = NclfPolicy {
            ensemble: plan.ensemble.clone(),
            ..NclfPolicy::default()
        };
        let v = construct_nclf(&sys, &rho, &policy)?;
        (VSpec::Constructed { rho: rho.clone(), policy }, v, rho)
    } else {
        let path = a.verify.as_ref().expect("clap enforces the mode group");
        let spec: VSpec = load_json(path)?;
        let v = spec.build(&sys)?;
        let alpha = match &spec {
            VSpec::Constructed { rho, .. } => rho.clone(),
            VSpec::ClosedForm { .. } => ScalarFunction::identity(),
        };
        (spec, v, alpha)
    };
    let alpha = match &a.alpha {
        Some(s) => parse_weight(s)?,
        None => default_alpha,
    };
    let points = plan_points(&sys, &plan);
    let values: Vec<(Vec<f64>, f64)> = points
        .iter()
        .map(|x| Ok((x.clone(), v.eval(x)?)))
        .collect::<Result<_>>()?;
    if let Some((x, _)) = values.iter().find(|(_, val)| !val.is_finite()) {
        // V̂ = ∞ off the origin: the candidate is not a function into [0, ∞)
        let witness = Witness::new("V is infinite at a sampled state").state(x);
        let mut evidence = Evidence::new("lyapunov", Status::Refuted).with_param("ensemble_size", v.ensemble_size());
        evidence.witness = Some(witness);
        summary(&format!("{} finiteness", sys.name()), &evidence);
        let samples: Vec<Value> = values.iter().map(|(x, val)| json!({"x": x, "value": val})).collect();
        let body = json!({
            "system": sys.name(),
            "config": cfg,
            "property": PropertyId::Nclf,
            "status": Status::Refuted,
            "v": vspec,
            "ensemble_size": v.ensemble_size(),
            "values": samples,
            "evidence": evidence,
            "notes": notes,
        });
        emit(&report("lyap", det, body), a.out.as_deref())?;
        return Ok(Status::Refuted.exit_code());
    }
    let psi2 = match &a.psi2 {
        Some(s) => parse_weight(s)?,
        None => {
            notes.push("ψ₂ is the sampled envelope of V over the plan radii".to_string());
            sampled_envelope(&values)?
        }
    };
    let psi1 = a.psi1.as_deref().map(parse_weight).transpose()?;
    let cert = certify_lyapunov(&v, &sys, &alpha, &psi2, psi1.as_ref(), &plan)?;
    let mut statuses = vec![cert.status];
    let mut bellman = Vec::new();
    if v.is_trajectory_integral() {
        let ds = build_ensemble(sys.disturbance(), &plan.ensemble);
        for x in points.iter().filter(|x| norm(x) > 0.0) {
            let ev = verify_bellman(&v, &sys, x, &ds[0], &plan.h_grid, plan.tol)?;
            statuses.push(ev.status);
            bellman.push(ev);
        }
    }
    let status = combine(statuses);
    let property = if psi1.is_some() && status == Status::Supported {
        PropertyId::Clf
    } else {
        PropertyId::Nclf
    };
    for c in cert.checks.iter().chain(&bellman) {
        summary(&format!("{} {}", sys.name(), c.check), c);
    }
    let mut evidence = Evidence::new("lyapunov", status).with_param("ensemble_size", v.ensemble_size());
    evidence.margin = cert.margin;
    evidence.witness = cert
        .checks
        .iter()
        .chain(&bellman)
        .find(|c| c.status == status && c.witness.is_some())
        .and_then(|c| c.witness.clone());
    evidence.notes = notes.clone();
    if let Some(p) = &a.levels {
        let reach = plan.radii.iter().copied().fold(1.0, f64::max);
        let file = fs::File::create(p)?;
        v.write_level_csv(&level_points(sys.dimension(), reach), file)?;
    }
    let samples: Vec<Value> = values.iter().map(|(x, val)| json!({"x": x, "value": val})).collect();
    let body = json!({
        "system": sys.name(),
        "config": cfg,
        "property": property,
        "status": status,
        "v": vspec,
        "ensemble_size": v.ensemble_size(),
        "values": samples,
        "certificate": cert,
        "bellman": bellman,
        "evidence": evidence,
        "notes": notes,
    });
    emit(&report("lyap", det, body), a.out.as_deref())?;
    Ok(status.exit_code())
}

fn read_psi_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>, BTreeMap<(u64, u64), f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut data = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Config(format!("{}: row {} needs r, t, psi", path.display(), i + 2)));
        }
        let f = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), i + 2)))
        };
        data.insert((f(0)?.to_bits(), f(1)?.to_bits()), f(2)?);
    }
    let mut rs: Vec<f64> = data.keys().map(|k| f64::from_bits(k.0)).filter(|r| *r > 0.0).collect();
    let mut ts: Vec<f64> = data.keys().map(|k| f64::from_bits(k.1)).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    Ok((rs, ts, data))
}

fn klfit(a: &KlfitArgs, det: bool) -> Result<i32> {
    let (beta, body) = if let Some(path) = &a.psi {
        let (rs, ts, data) = read_psi_csv(path)?;
        let mut nodes = Vec::with_capacity(rs.len() * ts.len());
        for r in &rs {
            for t in &ts {
                let v = data.get(&(r.to_bits(), t.to_bits())).ok_or_else(|| {
                    Error::Config(format!("{}: missing grid value at r={r}, t={t}", path.display()))
                })?;
                nodes.push(*v);
            }
        }
        let data_fn = MeshInterpolant::new(rs.clone(), ts.clone(), nodes)?;
        let psi = |r: f64, t: f64| data_fn.eval(r, t).max(0.0);
        let beta = kl_majorant(
            &psi,
            &KLFunction::default_omega(),
            &Mesh::from_points(rs.clone())?,
            &Mesh::from_points(ts.clone())?,
        )?;
        let mut min_margin = f64::INFINITY;
        for r in &rs {
            for t in &ts {
                min_margin = min_margin.min(beta.eval(*r, *t) - data[&(r.to_bits(), t.to_bits())]);
            }
        }
        let nodes = rs.len() * ts.len();
        (beta, json!({"source": path, "majorization": {"nodes": nodes, "min_margin": min_margin}}))
    } else {
        let arg = a.from_decay.as_deref().expect("clap enforces the source group");
        let cfg = load_config(arg)?;
        let sys = cfg.build()?;
        let mut params: ClassicalParams = match &a.plan {
            Some(p) => load_json(p)?,
            None => ClassicalParams::default(),
        };
        if let Some(s) = cfg.seed {
            params.ensemble.seed = s;
        }
        let env = decay_envelope(&sys, &params, a.levels)?;
        (env.beta.clone(), json!({"system": sys.name(), "config": cfg, "ladders": env.ladders}))
    };
    let (rg, tg) = match beta.as_mesh() {
        Some(m) => (m.r_mesh().to_vec(), m.t_mesh().to_vec()),
        None => (class_grid(), (0..=20).map(|k| 0.5 * k as f64).collect()),
    };
    let kl = verify_kl(&beta, &rg, &tg, 1e-12)?;
    summary("KL invariants", &kl);
    if let Some(p) = &a.out {
        let mut text = serde_json::to_string_pretty(&beta)?;
        text.push('\n');
        fs::write(p, text)?;
    }
    let mut body = body;
    body["beta"] = serde_json::to_value(&beta)?;
    body["status"] = json!(kl.status);
    body["kl_check"] = serde_json::to_value(&kl)?;
    emit(&report("klfit", det, body), None)?;
    Ok(kl.status.exit_code())
}

#[derive(Deserialize)]
struct StoredReport {
    property: Option<PropertyId>,
    evidence: Option<Evidence>,
    status: Option<Status>,
}

fn read_certs(dir: &Path) -> Result<BTreeMap<PropertyId, Evidence>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut out: BTreeMap<PropertyId, Evidence> = BTreeMap::new();
    for f in files {
        let r: StoredReport = load_json(&f)?;
        let Some(p) = r.property else { continue };
        let ev = match (r.evidence, r.status) {
            (Some(ev), _) => ev,
            (None, Some(s)) => Evidence::new(f.display().to_string(), s),
            (None, None) => continue,
        };
        // a refutation outweighs support for the same property
        match out.get(&p) {
            Some(prev) if prev.is_refuted() => {}
            _ => {
                out.insert(p, ev);
            }
        }
    }
    Ok(out)
}

fn infer(a: &InferArgs, det: bool) -> Result<i32> {
    let assumed: Vec<(PropertyId, Provenance)> = a
        .assume
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| Ok((s.parse::<PropertyId>()?, Provenance::Assumed)))
        .collect::<Result<_>>()?;
    let certs = match &a.certs {
        Some(d) => read_certs(d)?,
        None => BTreeMap::new(),
    };
    let mut start = assumed.clone();
    for (p, ev) in &certs {
        if ev.is_supported() {
            start.push((*p, Provenance::Evidence { check: ev.check.clone() }));
        }
    }
    let closure = infer_closure(&start);
    let contradictions = consistency_check(&certs, &assumed);
    if let Some(p) = &a.dot {
        fs::write(p, to_dot())?;
    }
    let names: Vec<&str> = closure.properties.iter().map(|p| p.name()).collect();
    eprintln!("closure: {}", names.join(", "));
    for c in &contradictions {
        eprintln!("contradiction: {} is derived but Refuted by {}", c.property, c.refuting_check);
    }
    let refuted: Vec<PropertyId> = certs.iter().filter(|(_, e)| e.is_refuted()).map(|(p, _)| *p).collect();
    let body = json!({
        "assumptions": assumed.iter().map(|(p, _)| *p).collect::<Vec<_>>(),
        "certificates": certs.iter().map(|(p, e)| (p.name().to_string(), e.status)).collect::<BTreeMap<_, _>>(),
        "refuted": refuted,
        "closure": closure.properties,
        "derivations": closure.derivations,
        "contradictions": contradictions,
    });
    emit(&report("infer", det, body), a.out.as_deref())?;
    Ok(if contradictions.is_empty() { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_classes() {
        assert_eq!(parse_weight("r").unwrap().class(), FunctionClass::Kinf);
        assert_eq!(parse_weight("min(r, 1)").unwrap().class(), FunctionClass::K);
        assert_eq!(parse_weight("r/(1+r^2)").unwrap().class(), FunctionClass::PositiveDefinite);
        let j = parse_weight(r#"{"expr": "r", "class": "K"}"#).unwrap();
        assert_eq!(j.class(), FunctionClass::K);
    }

    #[test]
    fn envelope_dominates_samples() {
        let vals = vec![(vec![0.0], 0.0), (vec![1.0], 0.8), (vec![-1.0], 1.0), (vec![2.0], 1.5)];
        let e = sampled_envelope(&vals).unwrap();
        for (x, v) in &vals {
            assert!(e.eval(norm(x)) >= *v);
        }
        assert!(e.eval(3.0) >= 2.5);
    }

    #[test]
    fn kinds() {
        assert!(matches!(parse_kind("ugas").unwrap(), Kind::Classical(ClassicalKind::Ugas)));
        assert!(matches!(parse_kind("iUGAS").unwrap(), Kind::Integral(IntegralKind::IUgas)));
        assert!(parse_kind("XYZ").is_err());
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["lyocert"]), EXIT_USAGE);
        assert_eq!(run(["lyocert", "axioms", "/nonexistent/cfg.json"]), EXIT_USAGE);
        assert_eq!(run(["lyocert", "certify", "catalogue:scalar_stable", "--property", "NOPE"]), EXIT_USAGE);
        assert_eq!(run(["lyocert", "lyap", "catalogue:scalar_stable"]), EXIT_USAGE);
    }
}
