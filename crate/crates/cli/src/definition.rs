//! Problem-definition files (JSON, `"schema": 1`) and their resolution into
//! library objects.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use preduce_core::expr::{parse, Chart, ChartError, Expr, ParseError};
use preduce_core::poisson::{PoissonError, PoissonStructure, SmoothMap, ValidationOptions};
use preduce_core::quotient::{QuotientError, QuotientSpec};
use preduce_core::sampling::SampleBox;
use preduce_core::submanifold::{ConstraintSet, SubmanifoldError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDefinition {
    pub schema: u32,
    pub chart: Vec<String>,
    /// Upper-triangle entries; the lower triangle follows by antisymmetry.
    #[serde(default)]
    pub poisson_tensor: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub casimirs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constraints: BTreeMap<String, ConstraintDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_box: Option<BoxDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tracked_quantities: Vec<Tracked>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quotient: Option<QuotientDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub i: String,
    pub j: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDef {
    pub functions: Vec<String>,
    #[serde(default)]
    pub seeds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDef {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub casimir: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    /// Ambient sample points for numeric checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Points sampled on constraint surfaces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tracked {
    pub name: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// `rk4` or `projected-rk4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotientDef {
    pub reduced_chart: Vec<String>,
    pub generators: Vec<String>,
    #[serde(default)]
    pub closure: Vec<TensorEntry>,
    #[serde(default)]
    pub relations: Vec<String>,
    pub actions: ActionsDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_hamiltonian: Option<String>,
    /// Casimirs of the reduced bracket, over the reduced chart.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub casimirs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionsDef {
    /// Explicit maps, each a list of component expressions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub maps: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_parameter: Option<OneParameter>,
}

/// A one-parameter family `Φ_t`, sampled at `values`, or at `count`
/// equispaced points of `[0, period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneParameter {
    pub parameter: String,
    pub components: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("{field}{}: {source}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Expression {
        field: String,
        line: Option<usize>,
        source: ParseError,
    },
    #[error("{field}: {source}")]
    Chart { field: String, source: ChartError },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Submanifold(#[from] SubmanifoldError),
    #[error(transparent)]
    Quotient(#[from] QuotientError),
}

/// Resolved tolerances with defaults filled in.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub jacobi: f64,
    pub casimir: f64,
    pub drift: f64,
    pub samples: usize,
    pub surface_samples: usize,
    pub sample_box: SampleBox,
}

/// A definition with every expression parsed.
#[derive(Debug, Clone)]
pub struct Problem {
    pub def: ProblemDefinition,
    pub chart: Arc<Chart>,
    pub structure: Arc<PoissonStructure>,
    pub hamiltonian: Option<Expr>,
    pub casimirs: Vec<(String, Expr)>,
    pub constraints: BTreeMap<String, ConstraintSet>,
    pub tracked: Vec<(String, Expr)>,
    pub settings: Settings,
    raw: String,
}

/// The parsed quotient section.
#[derive(Debug, Clone)]
pub struct ResolvedQuotient {
    pub spec: QuotientSpec,
    pub reduced_hamiltonian: Option<Expr>,
    pub casimirs: Vec<(String, Expr)>,
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self, InputError> {
        let raw = std::fs::read_to_string(path).map_err(|source| InputError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Self, InputError> {
        let def: ProblemDefinition = serde_json::from_str(raw).map_err(|e| InputError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::resolve(def, raw.to_string())
    }

    pub fn resolve(def: ProblemDefinition, raw: String) -> Result<Self, InputError> {
        if def.schema != SCHEMA_VERSION {
            return Err(InputError::Schema(def.schema));
        }
        let chart = Arc::new(Chart::new(def.chart.clone()).map_err(|source| InputError::Chart {
            field: "chart".into(),
            source,
        })?);
        let n = chart.dim();
        let ctx = Ctx { raw: &raw };

        let entries = ctx.tensor_entries(&chart, &def.poisson_tensor, "poisson_tensor")?;
        let structure = Arc::new(PoissonStructure::from_upper_unchecked(chart.clone(), entries)?);

        let hamiltonian = def
            .hamiltonian
            .as_deref()
            .map(|h| ctx.expr(h, &chart, "hamiltonian"))
            .transpose()?;
        let casimirs = def
            .casimirs
            .iter()
            .enumerate()
            .map(|(k, c)| Ok((c.clone(), ctx.expr(c, &chart, &format!("casimirs[{k}]"))?)))
            .collect::<Result<Vec<_>, InputError>>()?;
        let tracked = def
            .tracked_quantities
            .iter()
            .enumerate()
            .map(|(k, t)| {
                Ok((
                    t.name.clone(),
                    ctx.expr(&t.expr, &chart, &format!("tracked_quantities[{k}]"))?,
                ))
            })
            .collect::<Result<Vec<_>, InputError>>()?;

        let mut constraints = BTreeMap::new();
        for (name, c) in &def.constraints {
            let functions = c
                .functions
                .iter()
                .enumerate()
                .map(|(k, f)| ctx.expr(f, &chart, &format!("constraints.{name}.functions[{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            for (k, s) in c.seeds.iter().enumerate() {
                if s.len() != n {
                    return Err(InputError::Invalid(format!(
                        "constraints.{name}.seeds[{k}] has {} coordinates, chart has {n}",
                        s.len()
                    )));
                }
            }
            constraints.insert(
                name.clone(),
                ConstraintSet::new(structure.clone(), functions, c.seeds.clone())?,
            );
        }
        if let Some(z0) = &def.initial_point {
            if z0.len() != n {
                return Err(InputError::Invalid(format!(
                    "initial_point has {} coordinates, chart has {n}",
                    z0.len()
                )));
            }
        }

        let settings = settings(&def)?;
        Ok(Problem {
            def,
            chart,
            structure,
            hamiltonian,
            casimirs,
            constraints,
            tracked,
            settings,
            raw,
        })
    }

    /// The definition text as read.
    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// Parses an expression given on the command line against the chart.
    pub fn parse_expr(&self, text: &str, field: &str) -> Result<Expr, InputError> {
        Ctx { raw: "" }.expr(text, &self.chart, field)
    }

    pub fn validation_options(&self) -> ValidationOptions {
        ValidationOptions {
            sample_box: self.settings.sample_box,
            samples: self.settings.samples,
            jacobi_tol: self.settings.jacobi,
        }
    }

    /// Named constraint set, or the only one when `name` is omitted.
    pub fn constraint_set(&self, name: Option<&str>) -> Result<(&str, &ConstraintSet), InputError> {
        match name {
            Some(n) => self
                .constraints
                .get_key_value(n)
                .map(|(k, v)| (k.as_str(), v))
                .ok_or_else(|| InputError::Invalid(format!("no constraint set named `{n}`"))),
            None if self.constraints.len() == 1 => {
                let (k, v) = self.constraints.iter().next().expect("one entry");
                Ok((k.as_str(), v))
            }
            None if self.constraints.is_empty() => {
                Err(InputError::Invalid("definition has no constraints section".into()))
            }
            None => Err(InputError::Invalid(format!(
                "several constraint sets ({}); choose one with --constraints",
                self.constraints.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn quotient(&self) -> Result<ResolvedQuotient, InputError> {
        let q = self
            .def
            .quotient
            .as_ref()
            .ok_or_else(|| InputError::Invalid("definition has no quotient section".into()))?;
        let ctx = Ctx { raw: &self.raw };
        let reduced = Arc::new(Chart::new(q.reduced_chart.clone()).map_err(|source| InputError::Chart {
            field: "quotient.reduced_chart".into(),
            source,
        })?);
        let generators = q
            .generators
            .iter()
            .enumerate()
            .map(|(k, g)| ctx.expr(g, &self.chart, &format!("quotient.generators[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let closure = ctx.tensor_entries(&reduced, &q.closure, "quotient.closure")?;
        let relations = q
            .relations
            .iter()
            .enumerate()
            .map(|(k, r)| ctx.expr(r, &reduced, &format!("quotient.relations[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let actions = self.actions(&ctx, &q.actions)?;
        let reduced_hamiltonian = q
            .reduced_hamiltonian
            .as_deref()
            .map(|h| ctx.expr(h, &reduced, "quotient.reduced_hamiltonian"))
            .transpose()?;
        let casimirs = q
            .casimirs
            .iter()
            .enumerate()
            .map(|(k, c)| Ok((c.clone(), ctx.expr(c, &reduced, &format!("quotient.casimirs[{k}]"))?)))
            .collect::<Result<Vec<_>, InputError>>()?;
        let spec = QuotientSpec::new(self.structure.clone(), actions, generators, reduced, closure, relations)?;
        Ok(ResolvedQuotient {
            spec,
            reduced_hamiltonian,
            casimirs,
        })
    }

    fn actions(&self, ctx: &Ctx<'_>, def: &ActionsDef) -> Result<Vec<SmoothMap>, InputError> {
        let n = self.chart.dim();
        let mut out = Vec::new();
        for (k, comps) in def.maps.iter().enumerate() {
            let exprs = comps
                .iter()
                .enumerate()
                .map(|(c, e)| ctx.expr(e, &self.chart, &format!("quotient.actions.maps[{k}][{c}]")))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(SmoothMap::new(&self.chart, &self.chart, exprs)?);
        }
        if let Some(op) = &def.one_parameter {
            let names: Vec<String> = self
                .chart
                .names()
                .iter()
                .cloned()
                .chain([op.parameter.clone()])
                .collect();
            let extended = Chart::new(names).map_err(|source| InputError::Chart {
                field: "quotient.actions.one_parameter.parameter".into(),
                source,
            })?;
            let comps = op
                .components
                .iter()
                .enumerate()
                .map(|(c, e)| ctx.expr(e, &extended, &format!("quotient.actions.one_parameter.components[{c}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let values = match (&op.values, op.count) {
                (Some(v), None) => v.clone(),
                (None, count) => {
                    let count = count.unwrap_or(8);
                    let period = op.period.unwrap_or(TAU);
                    (0..count).map(|k| k as f64 * period / count as f64).collect()
                }
                (Some(_), Some(_)) => {
                    return Err(InputError::Invalid(
                        "quotient.actions.one_parameter: give either values or count".into(),
                    ))
                }
            };
            for t in values {
                let subst: Vec<Expr> = (0..n).map(Expr::var).chain([Expr::constant(t)]).collect();
                let exprs = comps.iter().map(|e| e.substitute(&subst)).collect();
                out.push(SmoothMap::new(&self.chart, &self.chart, exprs)?);
            }
        }
        if out.is_empty() {
            return Err(InputError::Invalid("quotient.actions lists no maps".into()));
        }
        Ok(out)
    }
}

fn settings(def: &ProblemDefinition) -> Result<Settings, InputError> {
    let t = def.tolerances.unwrap_or_default();
    let sample_box = match def.sample_box {
        Some(b) if b.lo < b.hi && b.lo.is_finite() && b.hi.is_finite() => SampleBox { lo: b.lo, hi: b.hi },
        Some(b) => return Err(InputError::Invalid(format!("sample_box [{}, {}] is empty", b.lo, b.hi))),
        None => SampleBox::default(),
    };
    let positive = |v: Option<f64>, default: f64, name: &str| match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(InputError::Invalid(format!(
            "tolerances.{name} must be positive, got {x}"
        ))),
        None => Ok(default),
    };
    Ok(Settings {
        jacobi: positive(t.jacobi, 1e-9, "jacobi")?,
        casimir: positive(t.casimir, 1e-10, "casimir")?,
        drift: positive(t.drift, 1e-7, "drift")?,
        samples: t.samples.unwrap_or(100).max(1),
        surface_samples: t.surface_samples.unwrap_or(20).max(1),
        sample_box,
    })
}

struct Ctx<'a> {
    raw: &'a str,
}

impl Ctx<'_> {
    fn expr(&self, text: &str, chart: &Chart, field: &str) -> Result<Expr, InputError> {
        parse(text, chart).map_err(|source| InputError::Expression {
            field: field.to_string(),
            line: self.line_of(text),
            source,
        })
    }

    /// Line of the first occurrence of `text` as a JSON string literal.
    fn line_of(&self, text: &str) -> Option<usize> {
        let literal = serde_json::to_string(text).ok()?;
        let at = self.raw.find(&literal)?;
        Some(self.raw[..at].matches('\n').count() + 1)
    }

    fn tensor_entries(
        &self,
        chart: &Chart,
        entries: &[TensorEntry],
        field: &str,
    ) -> Result<Vec<(usize, usize, Expr)>, InputError> {
        let mut out: Vec<(usize, usize, Expr)> = Vec::with_capacity(entries.len());
        for (k, e) in entries.iter().enumerate() {
            let lookup = |name: &str| {
                chart
                    .index_of(name)
                    .ok_or_else(|| InputError::Invalid(format!("{field}[{k}]: `{name}` is not a chart coordinate")))
            };
            let (i, j) = (lookup(&e.i)?, lookup(&e.j)?);
            if i >= j {
                return Err(InputError::Invalid(format!(
                    "{field}[{k}]: entries list the upper triangle, so `{}` must come before `{}` in the chart",
                    e.i, e.j
                )));
            }
            if out.iter().any(|(a, b, _)| (*a, *b) == (i, j)) {
                return Err(InputError::Invalid(format!(
                    "{field}[{k}]: ({}, {}) given twice",
                    e.i, e.j
                )));
            }
            out.push((i, j, self.expr(&e.value, chart, &format!("{field}[{k}].value"))?));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SO3: &str = r#"{
  "schema": 1,
  "chart": ["x1", "x2", "x3"],
  "poisson_tensor": [
    {"i": "x1", "j": "x2", "value": "-x3"},
    {"i": "x1", "j": "x3", "value": "x2"},
    {"i": "x2", "j": "x3", "value": "-x1"}
  ],
  "casimirs": ["x1^2 + x2^2 + x3^2"]
}"#;

    #[test]
    fn resolves_so3() {
        let p = Problem::from_json(SO3).unwrap();
        assert_eq!(p.structure.dim(), 3);
        assert_eq!(p.casimirs.len(), 1);
        assert_eq!(p.settings.samples, 100);
    }

    #[test]
    fn expression_errors_name_field_and_line() {
        let bad = SO3.replace("\"x2\"},", "\"x2 +\"},");
        match Problem::from_json(&bad) {
            Err(InputError::Expression { field, line, .. }) => {
                assert_eq!(field, "poisson_tensor[1].value");
                assert_eq!(line, Some(6));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_errors_carry_position() {
        match Problem::from_json("{\n  \"schema\": 1,\n  \"chart\": [\"x\",]\n}") {
            Err(InputError::Json { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_lower_triangle_and_unknown_names() {
        let swapped = SO3.replace(r#""i": "x1", "j": "x2""#, r#""i": "x2", "j": "x1""#);
        assert!(matches!(Problem::from_json(&swapped), Err(InputError::Invalid(_))));
        let unknown = SO3.replace(r#""j": "x3", "value": "x2""#, r#""j": "x9", "value": "x2""#);
        assert!(matches!(Problem::from_json(&unknown), Err(InputError::Invalid(_))));
        let schema = SO3.replace("\"schema\": 1", "\"schema\": 2");
        assert!(matches!(Problem::from_json(&schema), Err(InputError::Schema(2))));
    }

    #[test]
    fn round_trips_through_serde() {
        let p = Problem::from_json(SO3).unwrap();
        let text = serde_json::to_string_pretty(&p.def).unwrap();
        assert_eq!(Problem::from_json(&text).unwrap().def, p.def);
    }
}
