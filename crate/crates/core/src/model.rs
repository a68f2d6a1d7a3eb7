//! Line-oriented model files: `[kind NAME]` sections with `key = value`
//! pairs and `#` comments.

use std::path::Path;
use std::sync::Arc;

use crate::algebroid::{AlgebroidMorphism, FrameAlgebroid, LinearCoreSplit};
use crate::chart::ChartDomain;
use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::field::ScalarField;
use crate::holonomy::{ASphereFrame, SphereKind};
use crate::linalg::Mat;
use crate::obstruction::{Generator, MonodromyEvidence, Provenance};
use crate::poisson::{LeafSphere, PoissonBivector};
use crate::ruth::RepUTHGroupoid;
use crate::split::SplitVBA;

pub const BUILTIN_MODELS: &[(&str, &str)] = &[
    ("sphere-trivial", include_str!("../models/sphere-trivial.vbm")),
    ("su2-star", include_str!("../models/su2-star.vbm")),
    ("t1-toy", include_str!("../models/t1-toy.vbm")),
    ("pair-ruth-exp", include_str!("../models/pair-ruth-exp.vbm")),
    ("pair-ruth-flat", include_str!("../models/pair-ruth-flat.vbm")),
    ("pair-ruth-twisted", include_str!("../models/pair-ruth-twisted.vbm")),
];

/// A file path if one exists, otherwise a built-in name.
pub fn load_model(arg: &str) -> Result<Model> {
    let path = Path::new(arg);
    if path.is_file() {
        let src = std::fs::read_to_string(path).map_err(|e| Error::usage(format!("cannot read {arg}: {e}")))?;
        return Model::parse(&src);
    }
    match BUILTIN_MODELS.iter().find(|(n, _)| *n == arg) {
        Some((_, src)) => Model::parse(src),
        None => Err(Error::usage(format!("unknown model '{arg}' (not a file and not built in)"))),
    }
}

#[derive(Clone, Debug)]
struct Entry {
    key: String,
    args: Vec<String>,
    value: String,
    line: usize,
    key_col: usize,
    value_col: usize,
}

#[derive(Clone, Debug)]
struct Section {
    kind: String,
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

fn is_ident(s: &str) -> bool {
    let mut ch = s.chars();
    matches!(ch.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && ch.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn lex_sections(src: &str) -> Result<(Vec<Entry>, Vec<Section>)> {
    let mut header: Vec<Entry> = Vec::new();
    let mut sections: Vec<Section> = Vec::new();
    let mut in_model = false;
    for (ln, raw) in src.lines().enumerate() {
        let line = ln + 1;
        let text = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let trimmed = text.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = text.chars().take_while(|c| c.is_whitespace()).count() + 1;
        if let Some(inner) = trimmed.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| perr(line, indent, "section header must end with ']'"))?
                .trim();
            let mut parts = inner.split_whitespace();
            let kind = parts.next().ok_or_else(|| perr(line, indent, "empty section header"))?.to_string();
            let name = parts.next().map(str::to_string);
            if parts.next().is_some() {
                return Err(perr(line, indent, "section header takes a kind and one name"));
            }
            if kind == "model" {
                if name.is_some() {
                    return Err(perr(line, indent, "[model] takes no name"));
                }
                in_model = true;
                continue;
            }
            const KINDS: &[&str] = &["chart", "algebroid", "morphism", "splitvba", "sphere", "poisson", "generator", "ruth"];
            if !KINDS.contains(&kind.as_str()) {
                return Err(perr(line, indent + 1, format!("unknown section kind '{kind}'")));
            }
            let name = name.ok_or_else(|| perr(line, indent, format!("[{kind}] needs a name")))?;
            if !is_ident(&name) {
                return Err(perr(line, indent, format!("invalid name '{name}'")));
            }
            if sections.iter().any(|s| s.kind == kind && s.name == name) {
                return Err(perr(line, indent, format!("duplicate [{kind} {name}]")));
            }
            in_model = false;
            sections.push(Section { kind, name, line, entries: Vec::new() });
            continue;
        }
        let eq = text.find('=').ok_or_else(|| perr(line, indent, "expected 'key = value'"))?;
        let lhs = text[..eq].trim();
        let value_start = eq + 1 + (text[eq + 1..].len() - text[eq + 1..].trim_start().len());
        let value = text[eq + 1..].trim().to_string();
        let value_col = text[..value_start].chars().count() + 1;
        if value.is_empty() {
            return Err(perr(line, value_col, "empty value"));
        }
        let (key, args) = match lhs.find('(') {
            Some(p) => {
                let close = lhs
                    .strip_suffix(')')
                    .ok_or_else(|| perr(line, indent + p, "unbalanced parentheses in key"))?;
                let args: Vec<String> = close[p + 1..].split(',').map(|a| a.trim().to_string()).collect();
                if args.iter().any(|a| !is_ident(a)) {
                    return Err(perr(line, indent + p + 1, "key arguments must be names"));
                }
                (lhs[..p].trim().to_string(), args)
            }
            None => (lhs.to_string(), Vec::new()),
        };
        if !is_ident(&key) {
            return Err(perr(line, indent, format!("invalid key '{key}'")));
        }
        let entry = Entry { key, args, value, line, key_col: indent, value_col };
        if in_model {
            header.push(entry);
        } else {
            match sections.last_mut() {
                Some(s) => s.entries.push(entry),
                None => return Err(perr(line, indent, "key outside any section")),
            }
        }
    }
    Ok((header, sections))
}

/// Splits on top-level commas, keeping each part's column offset.
fn split_list(value: &str) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0usize;
    let chars: Vec<char> = value.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push((chars[start..i].iter().collect::<String>(), start));
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push((chars[start..].iter().collect::<String>(), start));
    out.into_iter()
        .map(|(s, off)| {
            let lead = s.chars().take_while(|c| c.is_whitespace()).count();
            (s.trim().to_string(), off + lead)
        })
        .collect()
}

fn parse_expr_at(src: &str, vars: &[&str], line: usize, col: usize) -> Result<Expr> {
    expr::parse(src, vars).map_err(|e| match e {
        Error::Parse { column, message, .. } => perr(line, col + column - 1, message),
        other => other,
    })
}

struct SectionReader<'a> {
    section: &'a Section,
    allowed: &'static [&'static str],
}

impl<'a> SectionReader<'a> {
    fn new(section: &'a Section, allowed: &'static [&'static str]) -> Result<Self> {
        for e in &section.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(perr(e.line, e.key_col, format!("unknown key '{}' in [{} {}]", e.key, section.kind, section.name)));
            }
        }
        Ok(SectionReader { section, allowed })
    }

    fn all(&self, key: &str) -> impl Iterator<Item = &'a Entry> + '_ {
        debug_assert!(self.allowed.contains(&key));
        let key = key.to_string();
        self.section.entries.iter().filter(move |e| e.key == key)
    }

    fn single(&self, key: &str) -> Result<Option<&'a Entry>> {
        let mut it = self.all(key);
        let first = it.next();
        if let Some(dup) = it.next() {
            return Err(perr(dup.line, dup.key_col, format!("duplicate key '{key}'")));
        }
        if let Some(e) = first {
            if !e.args.is_empty() {
                return Err(perr(e.line, e.key_col, format!("'{key}' takes no arguments")));
            }
        }
        Ok(first)
    }

    fn required(&self, key: &str) -> Result<&'a Entry> {
        self.single(key)?.ok_or_else(|| {
            perr(self.section.line, 1, format!("[{} {}] is missing '{key}'", self.section.kind, self.section.name))
        })
    }

    fn text(&self, key: &str) -> Result<Option<String>> {
        Ok(self.single(key)?.map(|e| e.value.clone()))
    }

    fn names(&self, key: &str) -> Result<Vec<String>> {
        let e = self.required(key)?;
        names_of(e)
    }

    fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.single(key)? {
            Some(e) => Ok(Some(numbers_of(e)?)),
            None => Ok(None),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.single(key)? {
            Some(e) => {
                let v = numbers_of(e)?;
                if v.len() != 1 {
                    return Err(perr(e.line, e.value_col, format!("'{key}' takes one number")));
                }
                Ok(Some(v[0]))
            }
            None => Ok(None),
        }
    }
}

fn names_of(e: &Entry) -> Result<Vec<String>> {
    let parts = split_list(&e.value);
    let mut out = Vec::new();
    for (p, off) in parts {
        if !is_ident(&p) {
            return Err(perr(e.line, e.value_col + off, format!("expected a name, got '{p}'")));
        }
        if out.contains(&p) {
            return Err(perr(e.line, e.value_col + off, format!("duplicate name '{p}'")));
        }
        out.push(p);
    }
    Ok(out)
}

fn numbers_of(e: &Entry) -> Result<Vec<f64>> {
    split_list(&e.value)
        .into_iter()
        .map(|(p, off)| {
            let ex = parse_expr_at(&p, &[], e.line, e.value_col + off)?;
            let v: f64 = ex.eval(&[] as &[f64]);
            if !v.is_finite() {
                return Err(perr(e.line, e.value_col + off, "not a finite number"));
            }
            Ok(v)
        })
        .collect()
}

fn arg_index(e: &Entry, k: usize, names: &[String], what: &str) -> Result<usize> {
    let a = &e.args[k];
    names
        .iter()
        .position(|n| n == a)
        .ok_or_else(|| perr(e.line, e.key_col, format!("'{a}' is not a {what} (expected one of {names:?})")))
}

fn expect_args(e: &Entry, n: usize) -> Result<()> {
    if e.args.len() != n {
        return Err(perr(e.line, e.key_col, format!("'{}' takes {n} argument(s), got {}", e.key, e.args.len())));
    }
    Ok(())
}

const PROBE: [f64; 8] = [0.7, -1.3, 0.45, 1.9, -0.85, 0.3, -0.6, 1.1];

/// Coefficients of an expression that is linear in `symbols`, as fields of
/// the chart coordinates.
fn linear_comb(e: &Entry, domain: &ChartDomain, coords: &[String], symbols: &[String]) -> Result<Vec<ScalarField>> {
    let m = coords.len();
    let vars: Vec<&str> = coords.iter().chain(symbols).map(String::as_str).collect();
    let ex = parse_expr_at(&e.value, &vars, e.line, e.value_col)?;
    let drop_symbols = |x: &Expr| x.substitute(&|i| if i < m { Expr::Var(i) } else { Expr::Num(0.0) });
    let coefs: Vec<Expr> = (0..symbols.len()).map(|k| drop_symbols(&ex.derivative(m + k))).collect();
    let points = domain.sample(6, 11)?;
    for (p, x) in points.iter().enumerate() {
        let mut full = x.clone();
        full.extend((0..symbols.len()).map(|k| PROBE[(k + p) % PROBE.len()]));
        let lhs: f64 = ex.eval(&full);
        let rhs: f64 = coefs.iter().enumerate().map(|(k, c)| full[m + k] * c.eval(x)).sum();
        if !((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs())) {
            return Err(perr(e.line, e.value_col, format!("value must be linear in {symbols:?} with no constant term")));
        }
    }
    Ok(coefs.into_iter().map(ScalarField::from_expr).collect())
}

fn field_at(e: &Entry, vars: &[&str]) -> Result<ScalarField> {
    Ok(ScalarField::from_expr(parse_expr_at(&e.value, vars, e.line, e.value_col)?))
}

#[derive(Clone, Debug)]
pub struct ModelSplit {
    pub vba: Arc<SplitVBA>,
    /// Frame algebroid declared as the total space, if any.
    pub total: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ModelSphere {
    pub sphere: ASphereFrame,
    pub split: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ModelPoisson {
    pub bivector: PoissonBivector,
    /// Chart indices of the three leaf coordinates.
    pub leaf: Option<[usize; 3]>,
    /// Chart index of the transverse coordinate scanned by `area-scan`.
    pub scan: Option<usize>,
    /// Closed-form area in the variables `(r, <scan>)`.
    pub area_closed_form: Option<ScalarField>,
}

impl ModelPoisson {
    /// Leaf sphere of radius `r` centred at the origin with the scan
    /// coordinate set to `value`.
    pub fn leaf_sphere(&self, r: f64, value: f64) -> Result<LeafSphere> {
        let leaf = self.leaf.ok_or_else(|| Error::usage(format!("poisson '{}' declares no leaf", self.bivector.name())))?;
        let mut center = vec![0.0; self.bivector.domain().dim()];
        if let Some(k) = self.scan {
            center[k] = value;
        }
        Ok(LeafSphere { center, radius: r, coords: leaf })
    }
}

#[derive(Clone, Debug)]
pub struct ModelGenerator {
    pub name: String,
    pub split: String,
    pub point: Vec<f64>,
    pub generator: Generator,
}

#[derive(Clone, Debug)]
pub struct ModelRuth {
    pub rep: RepUTHGroupoid,
    pub split: Option<String>,
}

/// A parsed model.
#[derive(Clone, Debug, Default)]
pub struct Model {
    pub name: String,
    pub description: Option<String>,
    pub provenance: Option<String>,
    pub charts: Vec<(String, Arc<ChartDomain>)>,
    pub algebroids: Vec<(String, Arc<FrameAlgebroid>)>,
    pub morphisms: Vec<AlgebroidMorphism>,
    pub splits: Vec<(String, ModelSplit)>,
    pub spheres: Vec<(String, ModelSphere)>,
    pub poissons: Vec<(String, ModelPoisson)>,
    pub generators: Vec<ModelGenerator>,
    pub ruths: Vec<(String, ModelRuth)>,
}

fn find<'a, T>(list: &'a [(String, T)], name: &str, what: &str) -> Result<&'a T> {
    list.iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::usage(format!("no {what} named '{name}'")))
}

fn resolve<'a, T>(list: &'a [(String, T)], e: &Entry, what: &str) -> Result<&'a T> {
    list.iter()
        .find(|(n, _)| *n == e.value)
        .map(|(_, v)| v)
        .ok_or_else(|| perr(e.line, e.value_col, format!("no {what} named '{}'", e.value)))
}

impl Model {
    pub fn parse(src: &str) -> Result<Model> {
        let (header, sections) = lex_sections(src)?;
        let mut model = Model::default();
        for e in &header {
            if !e.args.is_empty() {
                return Err(perr(e.line, e.key_col, "model keys take no arguments"));
            }
            match e.key.as_str() {
                "name" => model.name = e.value.clone(),
                "description" => model.description = Some(e.value.clone()),
                "provenance" => model.provenance = Some(e.value.clone()),
                _ => return Err(perr(e.line, e.key_col, format!("unknown key '{}' in [model]", e.key))),
            }
        }
        let of = |k: &'static str| sections.iter().filter(move |s| s.kind == k);
        for s in of("chart") {
            let c = model.build_chart(s)?;
            model.charts.push((s.name.clone(), c));
        }
        for s in of("poisson") {
            let p = model.build_poisson(s)?;
            model.poissons.push((s.name.clone(), p));
        }
        for s in of("algebroid") {
            let a = model.build_algebroid(s)?;
            model.algebroids.push((s.name.clone(), Arc::new(a)));
        }
        for s in of("morphism") {
            let m = model.build_morphism(s)?;
            model.morphisms.push(m);
        }
        for s in of("splitvba") {
            let v = model.build_split(s)?;
            model.splits.push((s.name.clone(), v));
        }
        for s in of("sphere") {
            let v = model.build_sphere(s)?;
            model.spheres.push((s.name.clone(), v));
        }
        for s in of("generator") {
            let g = model.build_generator(s)?;
            model.generators.push(g);
        }
        for s in of("ruth") {
            let r = model.build_ruth(s)?;
            model.ruths.push((s.name.clone(), r));
        }
        Ok(model)
    }

    pub fn chart(&self, name: &str) -> Result<&Arc<ChartDomain>> {
        find(&self.charts, name, "chart")
    }

    pub fn algebroid(&self, name: &str) -> Result<&Arc<FrameAlgebroid>> {
        find(&self.algebroids, name, "algebroid")
    }

    pub fn split(&self, name: &str) -> Result<&ModelSplit> {
        find(&self.splits, name, "split")
    }

    pub fn sphere(&self, name: &str) -> Result<&ModelSphere> {
        find(&self.spheres, name, "sphere")
    }

    pub fn poisson(&self, name: &str) -> Result<&ModelPoisson> {
        find(&self.poissons, name, "poisson bivector")
    }

    pub fn ruth(&self, name: &str) -> Result<&ModelRuth> {
        find(&self.ruths, name, "representation")
    }

    /// The split a sphere belongs to: its declared one, else the only split
    /// over its base.
    pub fn split_for_sphere(&self, sphere: &str) -> Result<&ModelSplit> {
        let s = self.sphere(sphere)?;
        if let Some(n) = &s.split {
            return self.split(n);
        }
        let over: Vec<&ModelSplit> = self
            .splits
            .iter()
            .map(|(_, v)| v)
            .filter(|v| v.vba.base().name() == s.sphere.base().name())
            .collect();
        match over.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::usage(format!("no split over the base of sphere '{sphere}'"))),
            _ => Err(Error::usage(format!("several splits over the base of sphere '{sphere}'; set 'split'"))),
        }
    }

    /// Spheres whose split is `split`.
    pub fn spheres_of(&self, split: &str) -> Vec<&ASphereFrame> {
        self.spheres
            .iter()
            .filter(|(n, _)| self.split_for_sphere(n).map(|v| v.vba.name() == split).unwrap_or(false))
            .map(|(_, s)| &s.sphere)
            .collect()
    }

    /// User-asserted generators attached to a split, as evidence at their
    /// common base point.
    pub fn asserted_evidence(&self, split: &str) -> Result<Option<MonodromyEvidence>> {
        let gens: Vec<&ModelGenerator> = self.generators.iter().filter(|g| g.split == split).collect();
        let Some(first) = gens.first() else {
            return Ok(None);
        };
        let v = &self.split(split)?.vba;
        if gens.iter().any(|g| g.point != first.point) {
            return Err(Error::structural(format!("generators of '{split}' sit over different points")));
        }
        MonodromyEvidence::new(first.point.clone(), v.base().rank(), v.rank_c(), gens.iter().map(|g| g.generator.clone()).collect())
            .map(Some)
    }

    fn build_chart(&self, s: &Section) -> Result<Arc<ChartDomain>> {
        let r = SectionReader::new(s, &["coords", "bounds", "exclude_radius", "ball_dims", "samples"])?;
        let coords = r.names("coords")?;
        let mut bounds: Vec<Option<(f64, f64)>> = vec![None; coords.len()];
        for e in r.all("bounds") {
            let v = numbers_of(e)?;
            if v.len() != 2 {
                return Err(perr(e.line, e.value_col, "bounds take 'lo, hi'"));
            }
            match e.args.as_slice() {
                [] => bounds.iter_mut().filter(|b| b.is_none()).for_each(|b| *b = Some((v[0], v[1]))),
                [_] => bounds[arg_index(e, 0, &coords, "coordinate")?] = Some((v[0], v[1])),
                _ => return Err(perr(e.line, e.key_col, "bounds take at most one coordinate")),
            }
        }
        // Per-coordinate bounds win over the blanket entry regardless of order.
        for e in r.all("bounds").filter(|e| e.args.len() == 1) {
            let v = numbers_of(e)?;
            bounds[arg_index(e, 0, &coords, "coordinate")?] = Some((v[0], v[1]));
        }
        let bounds = bounds
            .into_iter()
            .zip(&coords)
            .map(|(b, c)| b.ok_or_else(|| perr(s.line, 1, format!("[chart {}] has no bounds for '{c}'", s.name))))
            .collect::<Result<Vec<_>>>()?;
        let excl = r.number("exclude_radius")?;
        let ball = r.number("ball_dims")?.map(|v| v as usize).unwrap_or(coords.len());
        let samples = r.number("samples")?.map(|v| v as usize).unwrap_or(100);
        ChartDomain::with_ball_dims(coords, bounds, excl, ball, samples)
            .map(Arc::new)
            .map_err(|e| perr(s.line, 1, format!("[chart {}]: {e}", s.name)))
    }

    fn build_poisson(&self, s: &Section) -> Result<ModelPoisson> {
        let r = SectionReader::new(s, &["chart", "pi", "leaf", "scan", "area_closed_form"])?;
        let domain = resolve(&self.charts, r.required("chart")?, "chart")?.clone();
        let coords = domain.coords().to_vec();
        let vars: Vec<&str> = coords.iter().map(String::as_str).collect();
        let m = coords.len();
        let mut table: Vec<Option<ScalarField>> = vec![None; m * m];
        for e in r.all("pi") {
            expect_args(e, 2)?;
            let (i, j) = (arg_index(e, 0, &coords, "coordinate")?, arg_index(e, 1, &coords, "coordinate")?);
            if i == j {
                return Err(perr(e.line, e.key_col, "pi(x, x) is zero by antisymmetry"));
            }
            let f = field_at(e, &vars)?;
            let (lo, hi, f) = if i < j { (i, j, f) } else { (j, i, ScalarField::from_expr(expr::neg(f.expr().clone()))) };
            if table[lo * m + hi].replace(f).is_some() {
                return Err(perr(e.line, e.key_col, "component given twice"));
            }
        }
        let bivector = PoissonBivector::new(s.name.clone(), domain.clone(), |i, j| {
            table[i * m + j].clone().unwrap_or_else(ScalarField::zero)
        })?;
        let leaf = match r.single("leaf")? {
            Some(e) => {
                let n = names_of(e)?;
                if n.len() != 3 {
                    return Err(perr(e.line, e.value_col, "leaf takes three coordinates"));
                }
                let idx = |k: usize| {
                    domain.coord_index(&n[k]).ok_or_else(|| perr(e.line, e.value_col, format!("unknown coordinate '{}'", n[k])))
                };
                Some([idx(0)?, idx(1)?, idx(2)?])
            }
            None => None,
        };
        let scan_name = r.text("scan")?;
        let scan = match &scan_name {
            Some(n) => {
                let e = r.required("scan")?;
                Some(domain.coord_index(n).ok_or_else(|| perr(e.line, e.value_col, format!("unknown coordinate '{n}'")))?)
            }
            None => None,
        };
        let area_closed_form = match r.single("area_closed_form")? {
            Some(e) => {
                let sv = scan_name.clone().unwrap_or_else(|| "e".into());
                Some(field_at(e, &["r", sv.as_str()])?)
            }
            None => None,
        };
        Ok(ModelPoisson { bivector, leaf, scan, area_closed_form })
    }

    fn build_algebroid(&self, s: &Section) -> Result<FrameAlgebroid> {
        let r = SectionReader::new(
            s,
            &["chart", "kind", "poisson", "frame", "anchor", "bracket", "linear_rank", "fiber_start"],
        )?;
        let kind = r.text("kind")?.unwrap_or_else(|| "frame".into());
        let a = match kind.as_str() {
            "tangent" | "cotangent" => {
                for k in ["frame", "anchor", "bracket"] {
                    if let Some(e) = r.all(k).next() {
                        return Err(perr(e.line, e.key_col, format!("'{k}' is fixed by kind = {kind}")));
                    }
                }
                if kind == "tangent" {
                    let domain = resolve(&self.charts, r.required("chart")?, "chart")?.clone();
                    FrameAlgebroid::tangent(s.name.clone(), domain)
                } else {
                    let p = resolve(&self.poissons, r.required("poisson")?, "poisson bivector")?;
                    if let Some(e) = r.single("chart")? {
                        if resolve(&self.charts, e, "chart")?.coords() != p.bivector.domain().coords() {
                            return Err(perr(e.line, e.value_col, "chart differs from the bivector's chart"));
                        }
                    }
                    let t = p.bivector.to_cotangent_algebroid()?;
                    let anchor = t.anchor().clone();
                    let frame = t.frame().to_vec();
                    FrameAlgebroid::new(s.name.clone(), t.domain().clone(), frame, anchor, |i, j| {
                        (0..t.rank()).map(|k| t.structure(i, j, k)).collect()
                    })?
                }
            }
            "frame" => {
                let domain = resolve(&self.charts, r.required("chart")?, "chart")?.clone();
                let frame = r.names("frame")?;
                let coords = domain.coords().to_vec();
                for f in &frame {
                    if coords.contains(f) {
                        let e = r.required("frame")?;
                        return Err(perr(e.line, e.value_col, format!("frame name '{f}' collides with a coordinate")));
                    }
                }
                let (m, rk) = (coords.len(), frame.len());
                let dsyms: Vec<String> = coords.iter().map(|c| format!("d_{c}")).collect();
                let mut anchor = Mat::zero_fields(m, rk);
                let mut seen = vec![false; rk];
                for e in r.all("anchor") {
                    expect_args(e, 1)?;
                    let i = arg_index(e, 0, &frame, "frame element")?;
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(perr(e.line, e.key_col, "anchor given twice"));
                    }
                    for (k, f) in linear_comb(e, &domain, &coords, &dsyms)?.into_iter().enumerate() {
                        anchor.set(k, i, f);
                    }
                }
                let mut table: Vec<Option<Vec<ScalarField>>> = vec![None; rk * rk];
                for e in r.all("bracket") {
                    expect_args(e, 2)?;
                    let (i, j) = (arg_index(e, 0, &frame, "frame element")?, arg_index(e, 1, &frame, "frame element")?);
                    if i == j {
                        return Err(perr(e.line, e.key_col, "bracket of an element with itself is zero"));
                    }
                    let mut c = linear_comb(e, &domain, &coords, &frame)?;
                    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                    if i > j {
                        c = c.into_iter().map(|f| ScalarField::from_expr(expr::neg(f.expr().clone()))).collect();
                    }
                    if table[lo * rk + hi].replace(c).is_some() {
                        return Err(perr(e.line, e.key_col, "bracket given twice"));
                    }
                }
                FrameAlgebroid::new(s.name.clone(), domain, frame, anchor, |i, j| {
                    table[i * rk + j].clone().unwrap_or_else(|| vec![ScalarField::zero(); rk])
                })?
            }
            other => {
                let e = r.required("kind")?;
                return Err(perr(e.line, e.value_col, format!("unknown algebroid kind '{other}'")));
            }
        };
        match (r.number("linear_rank")?, r.number("fiber_start")?) {
            (Some(l), Some(f)) => a.with_split(LinearCoreSplit { linear: l as usize, fiber_start: f as usize }),
            (None, None) => Ok(a),
            _ => Err(perr(s.line, 1, "linear_rank and fiber_start go together")),
        }
    }

    fn build_morphism(&self, s: &Section) -> Result<AlgebroidMorphism> {
        let r = SectionReader::new(s, &["source", "target", "map"])?;
        let src = resolve(&self.algebroids, r.required("source")?, "algebroid")?.clone();
        let tgt = resolve(&self.algebroids, r.required("target")?, "algebroid")?.clone();
        let coords = src.domain().coords().to_vec();
        let mut map = Mat::zero_fields(tgt.rank(), src.rank());
        for e in r.all("map") {
            expect_args(e, 1)?;
            let j = arg_index(e, 0, src.frame(), "source frame element")?;
            for (i, f) in linear_comb(e, src.domain(), &coords, tgt.frame())?.into_iter().enumerate() {
                map.set(i, j, f);
            }
        }
        AlgebroidMorphism::new(s.name.clone(), src, tgt, map)
    }

    fn build_split(&self, s: &Section) -> Result<ModelSplit> {
        let r = SectionReader::new(
            s,
            &["base", "side", "core", "core_anchor", "conn_e", "conn_c", "omega", "total", "fiber_bounds"],
        )?;
        let base = resolve(&self.algebroids, r.required("base")?, "algebroid")?.clone();
        let side = r.names("side")?;
        let core = r.names("core")?;
        let domain = base.domain().clone();
        let coords = domain.coords().to_vec();
        let frame = base.frame().to_vec();
        let (rk, e_rank, c_rank) = (frame.len(), side.len(), core.len());
        let mut bd = Mat::zero_fields(e_rank, c_rank);
        for e in r.all("core_anchor") {
            expect_args(e, 1)?;
            let j = arg_index(e, 0, &core, "core name")?;
            for (i, f) in linear_comb(e, &domain, &coords, &side)?.into_iter().enumerate() {
                bd.set(i, j, f);
            }
        }
        let conn = |key: &str, names: &[String]| -> Result<Vec<Mat<ScalarField>>> {
            let n = names.len();
            let mut out = vec![Mat::zero_fields(n, n); rk];
            for e in r.all(key) {
                expect_args(e, 2)?;
                let i = arg_index(e, 0, &frame, "base frame element")?;
                let b = arg_index(e, 1, names, "fiber name")?;
                for (a, f) in linear_comb(e, &domain, &coords, names)?.into_iter().enumerate() {
                    out[i].set(a, b, f);
                }
            }
            Ok(out)
        };
        let conn_e = conn("conn_e", &side)?;
        let conn_c = conn("conn_c", &core)?;
        let mut omega: Vec<Mat<ScalarField>> = vec![Mat::zero_fields(c_rank, e_rank); rk * rk];
        for e in r.all("omega") {
            expect_args(e, 3)?;
            let i = arg_index(e, 0, &frame, "base frame element")?;
            let j = arg_index(e, 1, &frame, "base frame element")?;
            let b = arg_index(e, 2, &side, "side name")?;
            if i == j {
                return Err(perr(e.line, e.key_col, "omega is antisymmetric"));
            }
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            for (a, f) in linear_comb(e, &domain, &coords, &core)?.into_iter().enumerate() {
                let f = if i < j { f } else { ScalarField::from_expr(expr::neg(f.expr().clone())) };
                omega[lo * rk + hi].set(a, b, f);
            }
        }
        let mut v = SplitVBA::new(s.name.clone(), base, side, core, bd, conn_e, conn_c, |i, j| omega[i * rk + j].clone())?;
        if let Some(e) = r.single("fiber_bounds")? {
            let nums = numbers_of(e)?;
            if nums.len() != 2 {
                return Err(perr(e.line, e.value_col, "fiber_bounds take 'lo, hi'"));
            }
            v = v.with_fiber_bounds(vec![(nums[0], nums[1]); e_rank])?;
        }
        let total = match r.single("total")? {
            Some(e) => {
                resolve(&self.algebroids, e, "algebroid")?;
                Some(e.value.clone())
            }
            None => None,
        };
        Ok(ModelSplit { vba: Arc::new(v), total })
    }

    fn build_sphere(&self, s: &Section) -> Result<ModelSphere> {
        let r = SectionReader::new(
            s,
            &["base", "split", "kind", "center", "radius", "coords", "reparam", "point", "direction", "amplitude", "gamma", "a", "b"],
        )?;
        let base = resolve(&self.algebroids, r.required("base")?, "algebroid")?.clone();
        let kind_e = r.required("kind")?;
        let coords = base.domain().coords().to_vec();
        let m = coords.len();
        let need = |key: &str| -> Result<Vec<f64>> {
            r.numbers(key)?.ok_or_else(|| perr(s.line, 1, format!("[sphere {}] is missing '{key}'", s.name)))
        };
        let three_coords = || -> Result<[usize; 3]> {
            match r.single("coords")? {
                Some(e) => {
                    let n = names_of(e)?;
                    if n.len() != 3 {
                        return Err(perr(e.line, e.value_col, "coords takes three coordinates"));
                    }
                    let idx = |k: usize| {
                        base.domain()
                            .coord_index(&n[k])
                            .ok_or_else(|| perr(e.line, e.value_col, format!("unknown coordinate '{}'", n[k])))
                    };
                    Ok([idx(0)?, idx(1)?, idx(2)?])
                }
                None if m >= 3 => Ok([0, 1, 2]),
                None => Err(perr(s.line, 1, "chart has fewer than three coordinates")),
            }
        };
        let ts = ["t", "s"];
        let fields = |key: &str, names: &[String], required: bool| -> Result<Vec<ScalarField>> {
            let mut out: Vec<Option<ScalarField>> = vec![None; names.len()];
            for e in r.all(key) {
                expect_args(e, 1)?;
                let i = arg_index(e, 0, names, "name")?;
                if out[i].replace(field_at(e, &ts)?).is_some() {
                    return Err(perr(e.line, e.key_col, format!("{key} given twice")));
                }
            }
            out.into_iter()
                .zip(names)
                .map(|(f, n)| match f {
                    Some(f) => Ok(f),
                    None if !required => Ok(ScalarField::zero()),
                    None => Err(perr(s.line, 1, format!("[sphere {}] is missing {key}({n})", s.name))),
                })
                .collect()
        };
        let kind = match kind_e.value.as_str() {
            "degree-one" => SphereKind::DegreeOne {
                center: need("center")?,
                radius: r.number("radius")?.unwrap_or(1.0),
                coords: three_coords()?,
                reparam: r.number("reparam")?.unwrap_or(0.0),
            },
            "leaf-lift" => SphereKind::LeafLift {
                center: need("center")?,
                radius: r.number("radius")?.unwrap_or(1.0),
                coords: three_coords()?,
            },
            "isotropy-bump" => SphereKind::IsotropyBump {
                point: need("point")?,
                direction: need("direction")?,
                amplitude: r.number("amplitude")?.unwrap_or(1.0),
            },
            "tangent-lift" => SphereKind::TangentLift { gamma: fields("gamma", &coords, true)? },
            "expressions" => SphereKind::Expressions {
                gamma: fields("gamma", &coords, true)?,
                a: fields("a", base.frame(), false)?,
                b: fields("b", base.frame(), false)?,
            },
            other => return Err(perr(kind_e.line, kind_e.value_col, format!("unknown sphere kind '{other}'"))),
        };
        let split = match r.single("split")? {
            Some(e) => {
                resolve(&self.splits, e, "split")?;
                Some(e.value.clone())
            }
            None => None,
        };
        Ok(ModelSphere { sphere: ASphereFrame::new(s.name.clone(), base, kind)?, split })
    }

    fn build_generator(&self, s: &Section) -> Result<ModelGenerator> {
        let r = SectionReader::new(s, &["split", "point", "a_part", "c_part", "citation"])?;
        let split_e = r.required("split")?;
        let v = &resolve(&self.splits, split_e, "split")?.vba;
        let mut names: Vec<String> = v.base().domain().coords().to_vec();
        names.extend(v.side_names().iter().cloned());
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let pe = r.required("point")?;
        let point = numbers_of(pe)?;
        if point.len() != names.len() {
            return Err(perr(pe.line, pe.value_col, format!("point needs {} coordinates {names:?}", names.len())));
        }
        let list = |key: &str, n: usize| -> Result<Vec<f64>> {
            let e = r.required(key)?;
            let parts = split_list(&e.value);
            if parts.len() != n {
                return Err(perr(e.line, e.value_col, format!("{key} needs {n} components")));
            }
            parts
                .into_iter()
                .map(|(p, off)| Ok(parse_expr_at(&p, &vars, e.line, e.value_col + off)?.eval(&point)))
                .collect()
        };
        let a_part = list("a_part", v.base().rank())?;
        let c_part = list("c_part", v.rank_c())?;
        let citation = r.text("citation")?.ok_or_else(|| perr(s.line, 1, "asserted generators need a citation"))?;
        Ok(ModelGenerator {
            name: s.name.clone(),
            split: split_e.value.clone(),
            point,
            generator: Generator { a_part, c_part, provenance: Provenance::UserAsserted { citation } },
        })
    }

    fn build_ruth(&self, s: &Section) -> Result<ModelRuth> {
        let r = SectionReader::new(s, &["chart", "side", "core", "boundary", "delta_c", "delta_e", "omega", "split"])?;
        let domain = resolve(&self.charts, r.required("chart")?, "chart")?.clone();
        let side = r.names("side")?;
        let core = r.names("core")?;
        let coords = domain.coords().to_vec();
        let prefixed = |p: &str| coords.iter().map(|c| format!("{p}_{c}")).collect::<Vec<_>>();
        let (tv, mv, sv) = (prefixed("t"), prefixed("m"), prefixed("s"));
        let v2: Vec<&str> = tv.iter().chain(&sv).map(String::as_str).collect();
        let v3: Vec<&str> = tv.iter().chain(&mv).chain(&sv).map(String::as_str).collect();
        let (e_rank, c_rank) = (side.len(), core.len());
        let mut bd = Mat::zero_fields(e_rank, c_rank);
        for e in r.all("boundary") {
            expect_args(e, 1)?;
            let j = arg_index(e, 0, &core, "core name")?;
            for (i, f) in linear_comb(e, &domain, &coords, &side)?.into_iter().enumerate() {
                bd.set(i, j, f);
            }
        }
        let matrix = |key: &str, rows: &[String], cols: &[String], vars: &[&str], identity: bool| -> Result<Mat<ScalarField>> {
            let mut out = Mat::from_fn(rows.len(), cols.len(), |i, j| {
                ScalarField::constant(if identity && i == j { 1.0 } else { 0.0 })
            });
            for e in r.all(key) {
                expect_args(e, 2)?;
                let i = arg_index(e, 0, rows, "row name")?;
                let j = arg_index(e, 1, cols, "column name")?;
                out.set(i, j, field_at(e, vars)?);
            }
            Ok(out)
        };
        let dc = matrix("delta_c", &core, &core, &v2, true)?;
        let de = matrix("delta_e", &side, &side, &v2, true)?;
        let om = matrix("omega", &core, &side, &v3, false)?;
        let rep = RepUTHGroupoid::from_expressions(s.name.clone(), domain, bd, dc, de, om)?;
        let split = match r.single("split")? {
            Some(e) => {
                resolve(&self.splits, e, "split")?;
                Some(e.value.clone())
            }
            None => None,
        };
        Ok(ModelRuth { rep, split })
    }
}
