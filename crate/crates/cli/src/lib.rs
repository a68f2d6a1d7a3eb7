//! Command-line front end. [`run`] parses arguments, dispatches to the
//! library and writes one report to `out`.

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};
use vbob_core::ruth::RUTH_AXIOM_TOL;
use vbob_core::{
    build_total_algebroid, check_axioms, compare_algebroids, compat_residuals, decompose_regular, differentiate_ruth,
    holonomy_curvature_residual, leaf_symplectic_area, load_model, mon_variation, morphism_residual, period,
    period_batch, pullback_sphere, roundtrip_residual, ruth_axiom_residuals, sphere_morphism_residual,
    structural_degree_check, vb_groupoid_from_ruth, verdict, BaseIntegrability, Bundle, ConventionSign, Error,
    MonodromyEvidence, Premises, RuthConvention, VerdictOptions, BUILTIN_MODELS,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "VBOB_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "vbob", version, about = "Integrability checks for split VB-algebroids")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Sampling seed; the VBOB_SEED environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Emit a JSON record.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Emit CSV (scans only).
    #[arg(long, global = true)]
    csv: bool,
    /// Sign s in [h a, h b] = h[a, b] + s·ω(a, b).
    #[arg(long, global = true, allow_hyphen_values = true, default_value = "+1", value_parser = parse_sign)]
    convention_sign: ConventionSign,
    /// Residual tolerance; each command has its own default.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Number of sample points for pointwise checks.
    #[arg(long, global = true, default_value_t = 100)]
    samples: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// List the built-in models.
    ListModels,
    /// Algebroid axioms, morphisms and total-space cross-checks.
    Axioms { model: String },
    /// Compatibility relations of the split data.
    Compat {
        model: String,
        #[arg(long)]
        split: Option<String>,
    },
    /// Regular decomposition of the core anchor at a point.
    Decompose {
        model: String,
        #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
        point: Vec<f64>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long, default_value_t = 1e-9)]
        rank_tol: f64,
    },
    /// A-path equations and boundary conditions of spheres.
    SphereCheck {
        model: String,
        #[arg(long)]
        sphere: Option<String>,
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
    /// Holonomy against integrated curvature on sphere pullbacks.
    Holcheck {
        model: String,
        #[arg(long)]
        sphere: Option<String>,
        #[arg(long, default_value_t = 200)]
        grid: usize,
    },
    /// Spherical period of ω along one sphere.
    Period {
        model: String,
        #[arg(long)]
        sphere: String,
        #[arg(long, default_value_t = 201)]
        grid: usize,
    },
    /// Integrability verdict.
    Verdict {
        model: String,
        #[arg(long)]
        split: Option<String>,
        #[arg(long = "assert-A-integrable", value_name = "CITE", conflicts_with = "assert_a_nonintegrable")]
        assert_a_integrable: Option<String>,
        #[arg(long = "assert-A-nonintegrable", value_name = "CITE")]
        assert_a_nonintegrable: Option<String>,
        #[arg(long, value_name = "CITE")]
        assert_generators_complete: Option<String>,
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long, default_value_t = 10)]
        coeff_bound: i64,
    },
    /// Leaf areas over a grid of radii and transverse values.
    AreaScan {
        model: String,
        #[arg(long)]
        poisson: Option<String>,
        #[arg(long, value_name = "A:B:STEP", allow_hyphen_values = true)]
        r: String,
        #[arg(long, value_name = "A:B:STEP", allow_hyphen_values = true)]
        e: String,
        #[arg(long, default_value_t = 201)]
        grid: usize,
        /// Also difference the areas and compare with the closed-form gradient.
        #[arg(long)]
        gradient: bool,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
    },
    /// Structure equations of a representation up to homotopy.
    RuthCheck {
        model: String,
        #[arg(long)]
        ruth: Option<String>,
        #[arg(long, default_value = "composition-corrected", value_parser = parse_ruth_convention)]
        convention: RuthConvention,
    },
    /// Differentiate a representation at the units.
    DiffRuth {
        model: String,
        #[arg(long)]
        ruth: Option<String>,
        #[arg(long, default_value_t = 25)]
        points: usize,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
    },
}

fn parse_sign(s: &str) -> Result<ConventionSign, String> {
    ConventionSign::parse(s).ok_or_else(|| format!("expected +1 or -1, got '{s}'"))
}

fn parse_ruth_convention(s: &str) -> Result<RuthConvention, String> {
    RuthConvention::parse(s).ok_or_else(|| format!("expected 'literal' or 'composition-corrected', got '{s}'"))
}

/// Inclusive range `A:B:STEP`.
pub fn parse_range(s: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::Usage(format!("range '{s}' is not A:B:STEP"));
    let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(a.is_finite() && b.is_finite() && step.is_finite()) || b < a || step <= 0.0 {
        return Err(Error::Usage(format!("range '{s}' needs A <= B and STEP > 0")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize + 1;
    if n > 100_000 {
        return Err(Error::Usage(format!("range '{s}' has too many points")));
    }
    Ok((0..n).map(|k| a + k as f64 * step).collect())
}

enum Output {
    Record(Value),
    Table { header: Vec<&'static str>, rows: Vec<Vec<f64>>, record: Value },
}

struct Report {
    output: Output,
    passed: bool,
}

impl Report {
    fn record(v: Value, passed: bool) -> Self {
        Report { output: Output::Record(v), passed }
    }
}

struct Ctx {
    seed: u64,
    sign: ConventionSign,
    tol: Option<f64>,
    samples: usize,
}

impl Ctx {
    fn tol(&self, default: f64) -> Result<f64, Error> {
        let t = self.tol.unwrap_or(default);
        if t.is_finite() && t > 0.0 {
            Ok(t)
        } else {
            Err(Error::Usage(format!("tolerance must be positive, got {t}")))
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let seed = match std::env::var(SEED_ENV) {
        Ok(v) => match v.trim().parse::<u64>() {
            Ok(s) => s,
            Err(_) => {
                let _ = writeln!(err, "error: {SEED_ENV}='{v}' is not an unsigned integer");
                return EXIT_USAGE;
            }
        },
        Err(_) => cli.global.seed,
    };
    let ctx = Ctx { seed, sign: cli.global.convention_sign, tol: cli.global.tol, samples: cli.global.samples };
    if ctx.samples == 0 {
        let _ = writeln!(err, "error: --samples must be at least 1");
        return EXIT_USAGE;
    }
    let is_scan = matches!(cli.cmd, Cmd::AreaScan { .. });
    if cli.global.csv && !is_scan {
        let _ = writeln!(err, "error: CSV output is only available for area-scan");
        return EXIT_USAGE;
    }
    let report = match dispatch(&cli.cmd, &ctx) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let text = match &report.output {
        Output::Table { header, rows, .. } if cli.global.csv => csv(header, rows),
        Output::Table { record, .. } | Output::Record(record) => {
            if cli.global.json {
                let mut s = serde_json::to_string_pretty(record).expect("reports serialize");
                s.push('\n');
                s
            } else {
                plain(record)
            }
        }
    };
    if out.write_all(text.as_bytes()).is_err() {
        return EXIT_NUMERIC;
    }
    if report.passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(_) | Value::Bool(_) | Value::Null => Some(v.to_string()),
        Value::Array(a) if a.iter().all(|x| matches!(x, Value::Number(_))) && a.len() <= 8 => Some(v.to_string()),
        _ => None,
    }
}

fn nested(v: &Value) -> String {
    let s = v.to_string();
    if s.len() > 160 {
        "(use --json)".into()
    } else {
        s
    }
}

/// Human-readable rendering: top-level scalars, and one line per element of
/// arrays of records.
fn plain(v: &Value) -> String {
    let mut s = String::new();
    let Value::Object(map) = v else {
        return format!("{v}\n");
    };
    for (k, val) in map {
        if k == "schema_version" {
            continue;
        }
        if let Some(text) = scalar(val) {
            s.push_str(&format!("{k}: {text}\n"));
            continue;
        }
        match val {
            Value::Array(items) if items.iter().all(|i| i.is_string()) => {
                s.push_str(&format!("{k}:\n"));
                for item in items {
                    s.push_str(&format!("  - {}\n", item.as_str().expect("checked")));
                }
            }
            Value::Array(items) if items.iter().all(|i| i.is_object()) => {
                s.push_str(&format!("{k}:\n"));
                for item in items {
                    let fields: Vec<String> = item
                        .as_object()
                        .expect("checked")
                        .iter()
                        .map(|(ik, iv)| format!("{ik}={}", scalar(iv).unwrap_or_else(|| nested(iv))))
                        .collect();
                    s.push_str(&format!("  - {}\n", fields.join(" ")));
                }
            }
            Value::Object(inner) => {
                let fields: Vec<String> =
                    inner.iter().map(|(ik, iv)| format!("{ik}={}", scalar(iv).unwrap_or_else(|| nested(iv)))).collect();
                s.push_str(&format!("{k}: {}\n", fields.join(" ")));
            }
            _ => s.push_str(&format!("{k}: (use --json)\n")),
        }
    }
    s
}

fn base_record(command: &str, model: Option<&str>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("command".into(), json!(command));
    if let Some(name) = model {
        m.insert("model".into(), json!(name));
    }
    m
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn pick<'a, T>(list: &'a [(String, T)], name: Option<&str>, what: &str) -> Result<(&'a str, &'a T), Error> {
    match name {
        Some(n) => list
            .iter()
            .find(|(k, _)| k == n)
            .map(|(k, v)| (k.as_str(), v))
            .ok_or_else(|| Error::Usage(format!("no {what} named '{n}'"))),
        None => match list {
            [(k, v)] => Ok((k.as_str(), v)),
            [] => Err(Error::Usage(format!("model has no {what}"))),
            _ => {
                let names: Vec<&str> = list.iter().map(|(k, _)| k.as_str()).collect();
                Err(Error::Usage(format!("several {what}s ({}); choose one", names.join(", "))))
            }
        },
    }
}

fn dispatch(cmd: &Cmd, ctx: &Ctx) -> Result<Report, Error> {
    match cmd {
        Cmd::ListModels => list_models(),
        Cmd::Axioms { model } => axioms(model, ctx),
        Cmd::Compat { model, split } => compat(model, split.as_deref(), ctx),
        Cmd::Decompose { model, point, split, rank_tol } => decompose(model, point, split.as_deref(), *rank_tol),
        Cmd::SphereCheck { model, sphere, grid } => sphere_check(model, sphere.as_deref(), *grid, ctx),
        Cmd::Holcheck { model, sphere, grid } => holcheck(model, sphere.as_deref(), *grid, ctx),
        Cmd::Period { model, sphere, grid } => period_cmd(model, sphere, *grid),
        Cmd::Verdict { model, split, assert_a_integrable, assert_a_nonintegrable, assert_generators_complete, grid, coeff_bound } => {
            let base = match (assert_a_integrable, assert_a_nonintegrable) {
                (Some(c), _) => Some(BaseIntegrability::Integrable { citation: c.clone() }),
                (None, Some(c)) => Some(BaseIntegrability::NonIntegrable { citation: c.clone() }),
                (None, None) => None,
            };
            let premises = Premises { base, generators_complete: assert_generators_complete.clone() };
            verdict_cmd(model, split.as_deref(), premises, *grid, *coeff_bound, ctx)
        }
        Cmd::AreaScan { model, poisson, r, e, grid, gradient, step } => {
            area_scan(model, poisson.as_deref(), &parse_range(r)?, &parse_range(e)?, *grid, gradient.then_some(*step), ctx)
        }
        Cmd::RuthCheck { model, ruth, convention } => ruth_check(model, ruth.as_deref(), *convention, ctx),
        Cmd::DiffRuth { model, ruth, points, h } => diff_ruth(model, ruth.as_deref(), *points, *h, ctx),
    }
}

fn list_models() -> Result<Report, Error> {
    let mut models = Vec::new();
    for (name, src) in BUILTIN_MODELS {
        let m = vbob_core::Model::parse(src)?;
        models.push(json!({
            "name": name,
            "description": m.description.unwrap_or_default(),
            "splits": m.splits.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            "spheres": m.spheres.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        }));
    }
    let mut rec = base_record("list-models", None);
    rec.insert("models".into(), Value::Array(models));
    Ok(Report::record(Value::Object(rec), true))
}

fn axioms(name: &str, ctx: &Ctx) -> Result<Report, Error> {
    let tol = ctx.tol(1e-6)?;
    let m = load_model(name)?;
    let mut worst: f64 = 0.0;
    let mut algebroids = Vec::new();
    for (_, a) in &m.algebroids {
        let rep = check_axioms(a, ctx.samples, ctx.seed)?;
        worst = worst.max(rep.max());
        let mut v = to_value(&rep);
        if a.split().is_some() {
            let deg = structural_degree_check(a, ctx.samples, ctx.seed)?;
            worst = worst.max(deg.max_violation());
            v["degree"] = to_value(&deg);
        }
        algebroids.push(v);
    }
    let mut morphisms = Vec::new();
    for phi in &m.morphisms {
        let rep = morphism_residual(phi, ctx.samples, ctx.seed)?;
        worst = worst.max(rep.max());
        morphisms.push(to_value(&rep));
    }
    let mut totals = Vec::new();
    for (split, s) in &m.splits {
        let Some(total) = &s.total else { continue };
        let built = build_total_algebroid(&s.vba, ctx.sign)?;
        let cmp = compare_algebroids(&built, m.algebroid(total)?, ctx.samples, ctx.seed)?;
        worst = worst.max(cmp.max());
        totals.push(json!({
            "split": split,
            "declared": total,
            "convention_sign": ctx.sign.to_string(),
            "anchor_difference": cmp.anchor_difference,
            "bracket_difference": cmp.bracket_difference,
        }));
    }
    let mut rec = base_record("axioms", Some(&m.name));
    rec.insert("tol".into(), json!(tol));
    rec.insert("max_residual".into(), json!(worst));
    rec.insert("passed".into(), json!(worst <= tol));
    rec.insert("algebroids".into(), Value::Array(algebroids));
    rec.insert("morphisms".into(), Value::Array(morphisms));
    rec.insert("total_reconstruction".into(), Value::Array(totals));
    Ok(Report::record(Value::Object(rec), worst <= tol))
}

fn compat(name: &str, split: Option<&str>, ctx: &Ctx) -> Result<Report, Error> {
    let tol = ctx.tol(1e-6)?;
    let m = load_model(name)?;
    let chosen: Vec<_> = match split {
        Some(s) => vec![(s.to_string(), m.split(s)?)],
        None => m.splits.iter().map(|(n, s)| (n.clone(), s)).collect(),
    };
    let mut worst: f64 = 0.0;
    let mut reports = Vec::new();
    for (_, s) in chosen {
        let rep = compat_residuals(&s.vba, ctx.samples, ctx.seed, ctx.sign)?;
        worst = worst.max(rep.max());
        let mut v = to_value(&rep);
        v["max"] = json!(rep.max());
        reports.push(v);
    }
    let mut rec = base_record("compat", Some(&m.name));
    rec.insert("tol".into(), json!(tol));
    rec.insert("max_residual".into(), json!(worst));
    rec.insert("passed".into(), json!(worst <= tol));
    rec.insert("splits".into(), Value::Array(reports));
    Ok(Report::record(Value::Object(rec), worst <= tol))
}

fn decompose(name: &str, point: &[f64], split: Option<&str>, rank_tol: f64) -> Result<Report, Error> {
    let m = load_model(name)?;
    let (sname, s) = pick(&m.splits, split, "split")?;
    let dec = decompose_regular(&s.vba, point, rank_tol)?;
    let mut rec = base_record("decompose", Some(&m.name));
    rec.insert("split".into(), json!(sname));
    if let Value::Object(fields) = to_value(&dec) {
        rec.extend(fields);
    }
    Ok(Report::record(Value::Object(rec), true))
}

fn chosen_spheres<'a>(m: &'a vbob_core::Model, sphere: Option<&str>) -> Result<Vec<&'a str>, Error> {
    match sphere {
        Some(s) => {
            m.sphere(s)?;
            Ok(vec![m.spheres.iter().find(|(n, _)| n == s).map(|(n, _)| n.as_str()).expect("found")])
        }
        None => Ok(m.spheres.iter().map(|(n, _)| n.as_str()).collect()),
    }
}

fn sphere_check(name: &str, sphere: Option<&str>, grid: usize, ctx: &Ctx) -> Result<Report, Error> {
    let tol = ctx.tol(1e-6)?;
    let m = load_model(name)?;
    let mut worst: f64 = 0.0;
    let mut reports = Vec::new();
    for id in chosen_spheres(&m, sphere)? {
        let rep = sphere_morphism_residual(&m.sphere(id)?.sphere, grid)?;
        worst = worst.max(rep.max());
        let mut v = to_value(&rep);
        v["max"] = json!(rep.max());
        reports.push(v);
    }
    let mut rec = base_record("sphere-check", Some(&m.name));
    rec.insert("tol".into(), json!(tol));
    rec.insert("max_residual".into(), json!(worst));
    rec.insert("passed".into(), json!(worst <= tol));
    rec.insert("spheres".into(), Value::Array(reports));
    Ok(Report::record(Value::Object(rec), worst <= tol))
}

fn holcheck(name: &str, sphere: Option<&str>, grid: usize, ctx: &Ctx) -> Result<Report, Error> {
    let tol = ctx.tol(1e-4)?;
    let m = load_model(name)?;
    let mut worst: f64 = 0.0;
    let mut reports = Vec::new();
    for id in chosen_spheres(&m, sphere)? {
        let split = m.split_for_sphere(id)?;
        let p = pullback_sphere(&m.sphere(id)?.sphere, split.vba.clone())?;
        for bundle in [Bundle::E, Bundle::C] {
            let rep = holonomy_curvature_residual(&p, bundle, grid)?;
            worst = worst.max(rep.residual);
            reports.push(to_value(&rep));
        }
    }
    let mut rec = base_record("holcheck", Some(&m.name));
    rec.insert("tol".into(), json!(tol));
    rec.insert("max_residual".into(), json!(worst));
    rec.insert("passed".into(), json!(worst <= tol));
    rec.insert("families".into(), Value::Array(reports));
    Ok(Report::record(Value::Object(rec), worst <= tol))
}

fn period_cmd(name: &str, sphere: &str, grid: usize) -> Result<Report, Error> {
    let m = load_model(name)?;
    let split = m.split_for_sphere(sphere)?;
    let p = period(&pullback_sphere(&m.sphere(sphere)?.sphere, split.vba.clone())?, grid)?;
    if !p.matrix.is_finite() || !p.error_estimate.is_finite() {
        return Err(Error::Numeric(format!("period along '{sphere}' is not finite")));
    }
    let mut rec = base_record("period", Some(&m.name));
    rec.insert("sphere".into(), json!(sphere));
    rec.insert("split".into(), json!(split.vba.name()));
    rec.insert("grid".into(), json!(p.grid));
    rec.insert("coarse_grid".into(), json!(p.coarse_grid));
    rec.insert("period_matrix".into(), to_value(&p.matrix));
    rec.insert("max_abs".into(), json!(p.max_abs()));
    rec.insert("error_estimate".into(), json!(p.error_estimate));
    rec.insert("convention".into(), json!(p.convention));
    Ok(Report::record(Value::Object(rec), true))
}

fn verdict_cmd(name: &str, split: Option<&str>, premises: Premises, grid: usize, coeff_bound: i64, ctx: &Ctx) -> Result<Report, Error> {
    let m = load_model(name)?;
    let (sname, s) = pick(&m.splits, split, "split")?;
    let vba = &s.vba;
    let spheres: Vec<_> = m.spheres_of(vba.name()).into_iter().cloned().collect();
    let periods = period_batch(vba, &spheres, grid).into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut gens = MonodromyEvidence::period_generators(&periods, vba.base().rank(), &vec![1.0; vba.rank_e()]);
    let asserted = m.asserted_evidence(vba.name())?;
    let point = asserted.as_ref().map(|a| a.point.clone()).unwrap_or_default();
    if let Some(a) = asserted {
        gens.extend(a.generators);
    }
    let evidence = if gens.is_empty() {
        None
    } else {
        Some(MonodromyEvidence::new(point, vba.base().rank(), vba.rank_c(), gens)?)
    };
    let opts = VerdictOptions { tol: ctx.tol(1e-4)?, n_points: ctx.samples, seed: ctx.seed, coeff_bound, ..Default::default() };
    let v = verdict(vba, &periods, evidence.as_ref(), &premises, &opts)?;
    let mut rec = base_record("verdict", Some(&m.name));
    rec.insert("split".into(), json!(sname));
    rec.insert("grid".into(), json!(grid));
    if let Value::Object(fields) = to_value(&v) {
        rec.extend(fields);
    }
    rec.insert(
        "period_matrices".into(),
        Value::Array(
            periods
                .iter()
                .map(|p| json!({"sphere": p.sphere, "period_matrix": p.matrix, "error_estimate": p.error_estimate}))
                .collect(),
        ),
    );
    rec.insert("evidence".into(), to_value(&evidence));
    Ok(Report::record(Value::Object(rec), true))
}

fn coarse_grid(n: usize) -> usize {
    let c = n.div_ceil(2);
    if c % 2 == 0 {
        c + 1
    } else {
        c
    }
}

fn area_scan(
    name: &str,
    poisson: Option<&str>,
    rs: &[f64],
    es: &[f64],
    grid: usize,
    gradient_step: Option<f64>,
    ctx: &Ctx,
) -> Result<Report, Error> {
    let tol = ctx.tol(1e-6)?;
    let m = load_model(name)?;
    let (pname, p) = pick(&m.poissons, poisson, "poisson structure")?;
    let nodes: Vec<(f64, f64)> = rs.iter().flat_map(|&r| es.iter().map(move |&e| (r, e))).collect();
    let area = |r: f64, e: f64, n: usize| leaf_symplectic_area(&p.bivector, &p.leaf_sphere(r, e)?, n);
    let closed = p.area_closed_form.as_ref();
    let coarse = coarse_grid(grid);
    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&(r, e)| -> Result<Vec<f64>, Error> {
            let fine = area(r, e, grid)?;
            let rough = area(r, e, coarse)?;
            let mut row = vec![r, e, fine.area, (fine.area - rough.area).abs(), fine.tangency_residual];
            if let Some(f) = closed {
                let want: f64 = f.eval(&[r, e][..]);
                row.extend([want, ((fine.area - want) / want).abs()]);
            }
            if let Some(h) = gradient_step {
                let (dr, de) = mon_variation(|r, e| area(r, e, grid).map(|a| a.area), r, e, h)?;
                row.extend([dr, de]);
                if let Some(f) = closed {
                    row.extend([f.derivative(0).eval(&[r, e][..]), f.derivative(1).eval(&[r, e][..])]);
                }
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let mut header = vec!["r", "e", "area", "error_estimate", "tangency_residual"];
    if closed.is_some() {
        header.extend(["closed_form", "rel_error"]);
    }
    if gradient_step.is_some() {
        header.extend(["dA_dr", "dA_de"]);
        if closed.is_some() {
            header.extend(["dA_dr_closed", "dA_de_closed"]);
        }
    }
    let col = |name: &str| header.iter().position(|h| *h == name);
    let max_of = |k: Option<usize>| k.map(|k| rows.iter().fold(0.0f64, |m, r| m.max(r[k])));
    let max_rel = max_of(col("rel_error"));
    let max_grad = match (col("dA_dr"), col("dA_dr_closed")) {
        (Some(a), Some(b)) => {
            Some(rows.iter().fold(0.0f64, |m, r| m.max((r[a] - r[b]).abs()).max((r[a + 1] - r[b + 1]).abs())))
        }
        _ => None,
    };
    let passed = max_rel.is_none_or(|v| v <= tol);
    let mut rec = base_record("area-scan", Some(&m.name));
    rec.insert("poisson".into(), json!(pname));
    rec.insert("grid".into(), json!(grid));
    rec.insert("coarse_grid".into(), json!(coarse));
    rec.insert("tol".into(), json!(tol));
    rec.insert("points".into(), json!(rows.len()));
    rec.insert("max_rel_error".into(), json!(max_rel));
    rec.insert("max_error_estimate".into(), json!(max_of(col("error_estimate"))));
    rec.insert("max_gradient_difference".into(), json!(max_grad));
    rec.insert("passed".into(), json!(passed));
    rec.insert(
        "rows".into(),
        Value::Array(
            rows.iter()
                .map(|r| Value::Object(header.iter().zip(r).map(|(h, v)| (h.to_string(), json!(v))).collect()))
                .collect(),
        ),
    );
    Ok(Report { output: Output::Table { header, rows, record: Value::Object(rec) }, passed })
}

fn ruth_check(name: &str, ruth: Option<&str>, conv: RuthConvention, ctx: &Ctx) -> Result<Report, Error> {
    let tol = ctx.tol(RUTH_AXIOM_TOL)?;
    let m = load_model(name)?;
    let (rname, r) = pick(&m.ruths, ruth, "ruth")?;
    let ax = ruth_axiom_residuals(&r.rep, ctx.samples, ctx.seed)?;
    let mut passed = ax.max(conv) <= tol;
    let groupoid = if passed {
        let vb = vb_groupoid_from_ruth(&r.rep, conv, ctx.samples, ctx.seed)?;
        let rep = vb.residuals(ctx.samples, ctx.seed)?;
        passed &= rep.max() <= tol;
        let mut v = to_value(&rep);
        v["max"] = json!(rep.max());
        v
    } else {
        Value::Null
    };
    let mut rec = base_record("ruth-check", Some(&m.name));
    rec.insert("ruth".into(), json!(rname));
    rec.insert("convention".into(), json!(conv));
    rec.insert("tol".into(), json!(tol));
    rec.insert("max_residual".into(), json!(ax.max(conv)));
    rec.insert("passed".into(), json!(passed));
    rec.insert("axioms".into(), to_value(&ax));
    rec.insert("vb_groupoid".into(), groupoid);
    Ok(Report::record(Value::Object(rec), passed))
}

fn diff_ruth(name: &str, ruth: Option<&str>, points: usize, h: f64, ctx: &Ctx) -> Result<Report, Error> {
    let tol = ctx.tol(1e-5)?;
    let m = load_model(name)?;
    let (rname, r) = pick(&m.ruths, ruth, "ruth")?;
    let pts = r.rep.groupoid().domain().sample(points, ctx.seed)?;
    let d = differentiate_ruth(&r.rep, &pts, h, ctx.sign)?;
    let max_norm = |v: &[Vec<vbob_core::Mat<f64>>]| v.iter().flatten().fold(0.0f64, |m, g| m.max(g.max_abs()));
    let mut rec = base_record("diff-ruth", Some(&m.name));
    rec.insert("ruth".into(), json!(rname));
    rec.insert("points".into(), json!(points));
    rec.insert("step".into(), json!(h));
    rec.insert("convention_sign".into(), json!(ctx.sign.to_string()));
    rec.insert("max_conn_e".into(), json!(max_norm(&d.conn_e)));
    rec.insert("max_conn_c".into(), json!(max_norm(&d.conn_c)));
    rec.insert("max_omega".into(), json!(max_norm(&d.omega)));
    let mut passed = true;
    if let Some(split) = &r.split {
        let rt = roundtrip_residual(&d, &m.split(split)?.vba)?;
        passed = rt.max() <= tol;
        rec.insert("split".into(), json!(split));
        rec.insert("tol".into(), json!(tol));
        rec.insert("roundtrip".into(), json!({"conn_e": rt.conn_e, "conn_c": rt.conn_c, "omega": rt.omega, "max": rt.max()}));
        rec.insert("passed".into(), json!(passed));
    }
    rec.insert("data".into(), to_value(&d));
    Ok(Report::record(Value::Object(rec), passed))
}
