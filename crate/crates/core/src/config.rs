//! Potential-spec files.
//!
//! ```json
//! {
//!   "dimension": 3,
//!   "angular": { "kind": "constant", "parameters": { "value": -5.0 } },
//!   "radial":  { "kind": "log_power", "parameters": { "c": 1.0, "p": 2.5 }, "sign": "minus" },
//!   "interior": { "r0": 1.0, "degrees": [0] }
//! }
//! ```
//!
//! `angular.kind` is one of `constant` (`value`, or `ladder_sigma` for the
//! constant with ladder ratio σ in d = 3), `axisymmetric` (`breaks`, `coeffs`
//! of a piecewise polynomial in θ on [0, π], local powers), or `hemisphere`
//! (`epsilon`, `parity`). `radial.kind` is `zero`, `log_power` (`c`, `p`),
//! `tabulated` (`breaks`, `coeffs` in s = ln r) or `counterexample`.
//! `radial` defaults to zero and `sign` to `minus`. `interior` is read only by
//! ladder-type commands; `ramp` and `offset` default to the quintic
//! smoothstep on [0, r0] and 0.

use std::f64::consts::PI;
use std::fmt;

use serde_json::{Map, Value};

use crate::counterexamples::CounterexampleT;
use crate::ladder::{InteriorModel, SectorMode};
use crate::potential::{Envelope, Parity, PiecewisePoly, RadialPerturbation, SphereKind, SpherePotential};

/// A problem in a spec file, located by line (syntax) or field path (content).
#[derive(Debug, Clone, PartialEq)]
pub struct SpecError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for SpecError {}

fn err(field: &str, message: impl Into<String>) -> SpecError {
    SpecError {
        field: field.to_string(),
        line: None,
        message: message.into(),
    }
}

type SpecResult<T> = std::result::Result<T, SpecError>;

#[derive(Debug, Clone)]
pub struct InteriorSpec {
    pub r0: f64,
    pub ramp: Option<PiecewisePoly>,
    pub offset: Option<PiecewisePoly>,
    pub angular_shift: f64,
    pub degrees: Vec<usize>,
}

/// A parsed spec, plus the canonical JSON it was read from.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub dimension: usize,
    pub angular: SpherePotential,
    pub radial: RadialPerturbation,
    pub interior: Option<InteriorSpec>,
    pub source: Value,
}

fn obj<'a>(v: &'a Value, field: &str) -> SpecResult<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| err(field, "expected an object"))
}

fn num(m: &Map<String, Value>, key: &str, path: &str) -> SpecResult<f64> {
    let p = format!("{path}.{key}");
    let v = m.get(key).ok_or_else(|| err(&p, "missing"))?;
    let x = v.as_f64().ok_or_else(|| err(&p, "expected a number"))?;
    if !x.is_finite() {
        return Err(err(&p, "must be finite"));
    }
    Ok(x)
}

fn opt_num(m: &Map<String, Value>, key: &str, path: &str) -> SpecResult<Option<f64>> {
    if m.contains_key(key) {
        num(m, key, path).map(Some)
    } else {
        Ok(None)
    }
}

fn string<'a>(m: &'a Map<String, Value>, key: &str, path: &str) -> SpecResult<&'a str> {
    let p = format!("{path}.{key}");
    m.get(key).ok_or_else(|| err(&p, "missing"))?.as_str().ok_or_else(|| err(&p, "expected a string"))
}

fn check_keys(m: &Map<String, Value>, allowed: &[&str], path: &str) -> SpecResult<()> {
    for k in m.keys() {
        if !allowed.contains(&k.as_str()) {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            return Err(err(&p, format!("unknown field (expected one of: {})", allowed.join(", "))));
        }
    }
    Ok(())
}

fn piecewise(m: &Map<String, Value>, path: &str) -> SpecResult<PiecewisePoly> {
    let bp = format!("{path}.breaks");
    let cp = format!("{path}.coeffs");
    let breaks: Vec<f64> = m
        .get("breaks")
        .ok_or_else(|| err(&bp, "missing"))?
        .as_array()
        .ok_or_else(|| err(&bp, "expected an array of numbers"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| err(&bp, "expected an array of numbers")))
        .collect::<SpecResult<_>>()?;
    let coeffs: Vec<Vec<f64>> = m
        .get("coeffs")
        .ok_or_else(|| err(&cp, "missing"))?
        .as_array()
        .ok_or_else(|| err(&cp, "expected an array of arrays"))?
        .iter()
        .enumerate()
        .map(|(i, piece)| {
            let ip = format!("{cp}[{i}]");
            piece
                .as_array()
                .ok_or_else(|| err(&ip, "expected an array of numbers"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| err(&ip, "expected an array of numbers")))
                .collect()
        })
        .collect::<SpecResult<_>>()?;
    PiecewisePoly::new(breaks, coeffs).map_err(|e| err(path, e.to_string()))
}

fn piecewise_or_constant(v: &Value, domain: (f64, f64), path: &str) -> SpecResult<PiecewisePoly> {
    match v {
        Value::Number(n) => Ok(PiecewisePoly::constant(domain.0, domain.1, n.as_f64().unwrap_or(f64::NAN))),
        Value::Object(m) => piecewise(m, path),
        _ => Err(err(path, "expected a number or {breaks, coeffs}")),
    }
}

/// μ₁ − 1/4 = (2π/ln(1/σ))², d = 3.
fn ladder_constant(sigma: f64, field: &str) -> SpecResult<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(err(field, "ladder_sigma must lie in (0, 1)"));
    }
    let mu1 = 0.25 + (2.0 * PI / sigma.ln()).powi(2);
    Ok(-mu1)
}

fn parse_angular(v: &Value, dimension: usize) -> SpecResult<SpherePotential> {
    let m = obj(v, "angular")?;
    check_keys(m, &["kind", "parameters"], "angular")?;
    let kind = string(m, "kind", "angular")?;
    let empty = Map::new();
    let params = match m.get("parameters") {
        Some(p) => obj(p, "angular.parameters")?,
        None => &empty,
    };
    let path = "angular.parameters";
    let kind = match kind {
        "constant" => {
            check_keys(params, &["value", "ladder_sigma"], path)?;
            let c = match (opt_num(params, "value", path)?, opt_num(params, "ladder_sigma", path)?) {
                (Some(c), None) => c,
                (None, Some(s)) => ladder_constant(s, &format!("{path}.ladder_sigma"))?,
                (Some(_), Some(_)) => return Err(err(path, "give either value or ladder_sigma, not both")),
                (None, None) => return Err(err(&format!("{path}.value"), "missing")),
            };
            SphereKind::Constant(c)
        }
        "axisymmetric" => {
            check_keys(params, &["breaks", "coeffs"], path)?;
            SphereKind::Axisymmetric(piecewise(params, path)?)
        }
        "hemisphere" => {
            check_keys(params, &["epsilon", "parity"], path)?;
            let epsilon = num(params, "epsilon", path)?;
            let parity = match string(params, "parity", path)? {
                "even" => Parity::Even,
                "odd" => Parity::Odd,
                other => return Err(err(&format!("{path}.parity"), format!("expected even or odd, got {other:?}"))),
            };
            SphereKind::Hemisphere { epsilon, parity }
        }
        other => {
            return Err(err(
                "angular.kind",
                format!("unknown kind {other:?} (expected constant, axisymmetric or hemisphere)"),
            ))
        }
    };
    SpherePotential::build(dimension, kind).map_err(|e| err("angular", e.to_string()))
}

fn parse_radial(v: Option<&Value>) -> SpecResult<RadialPerturbation> {
    let Some(v) = v else {
        return Ok(RadialPerturbation::zero());
    };
    let m = obj(v, "radial")?;
    check_keys(m, &["kind", "parameters", "sign"], "radial")?;
    let envelope = match m.get("sign") {
        None => Envelope::Minus,
        Some(Value::String(s)) if s == "minus" => Envelope::Minus,
        Some(Value::String(s)) if s == "plus" => Envelope::Plus,
        Some(_) => return Err(err("radial.sign", "expected \"plus\" or \"minus\"")),
    };
    let empty = Map::new();
    let params = match m.get("parameters") {
        Some(p) => obj(p, "radial.parameters")?,
        None => &empty,
    };
    let path = "radial.parameters";
    let t = match string(m, "kind", "radial")? {
        "zero" => RadialPerturbation::zero(),
        "log_power" => {
            check_keys(params, &["c", "p"], path)?;
            RadialPerturbation::log_power(num(params, "c", path)?, num(params, "p", path)?, envelope).map_err(|e| err(path, e.to_string()))?
        }
        "tabulated" => {
            check_keys(params, &["breaks", "coeffs"], path)?;
            RadialPerturbation::tabulated(piecewise(params, path)?, envelope).map_err(|e| err(path, e.to_string()))?
        }
        "counterexample" => {
            check_keys(params, &[], path)?;
            let mut t = CounterexampleT::default_construction()
                .map_err(|e| err("radial", e.to_string()))?
                .perturbation();
            t.envelope = envelope;
            t
        }
        other => {
            return Err(err(
                "radial.kind",
                format!("unknown kind {other:?} (expected zero, log_power, tabulated or counterexample)"),
            ))
        }
    };
    Ok(t)
}

fn parse_interior(v: Option<&Value>) -> SpecResult<Option<InteriorSpec>> {
    let Some(v) = v else {
        return Ok(None);
    };
    let m = obj(v, "interior")?;
    check_keys(m, &["r0", "ramp", "offset", "angular_shift", "degrees"], "interior")?;
    let r0 = opt_num(m, "r0", "interior")?.unwrap_or(1.0);
    if !(r0 > 0.0) {
        return Err(err("interior.r0", "must be positive"));
    }
    let ramp = m.get("ramp").map(|x| piecewise_or_constant(x, (0.0, r0), "interior.ramp")).transpose()?;
    let offset = m.get("offset").map(|x| piecewise_or_constant(x, (0.0, r0), "interior.offset")).transpose()?;
    let angular_shift = opt_num(m, "angular_shift", "interior")?.unwrap_or(0.0);
    let degrees = match m.get("degrees") {
        None => vec![0],
        Some(Value::Array(a)) if !a.is_empty() => a
            .iter()
            .map(|x| x.as_u64().map(|d| d as usize).ok_or_else(|| err("interior.degrees", "expected non-negative integers")))
            .collect::<SpecResult<_>>()?,
        Some(_) => return Err(err("interior.degrees", "expected a non-empty array of integers")),
    };
    Ok(Some(InteriorSpec {
        r0,
        ramp,
        offset,
        angular_shift,
        degrees,
    }))
}

impl PotentialSpec {
    pub fn from_json_str(text: &str) -> SpecResult<Self> {
        let source: Value = serde_json::from_str(text).map_err(|e| SpecError {
            field: String::new(),
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        let root = obj(&source, "(root)")?;
        check_keys(root, &["dimension", "angular", "radial", "interior"], "")?;
        let dimension = match root.get("dimension") {
            None => 3,
            Some(v) => v
                .as_u64()
                .filter(|d| *d >= 3)
                .ok_or_else(|| err("dimension", "expected an integer >= 3"))? as usize,
        };
        let angular = parse_angular(root.get("angular").ok_or_else(|| err("angular", "missing"))?, dimension)?;
        let radial = parse_radial(root.get("radial"))?;
        let interior = parse_interior(root.get("interior"))?;
        Ok(Self {
            dimension,
            angular,
            radial,
            interior,
            source,
        })
    }

    pub fn from_path(path: &std::path::Path) -> SpecResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| err("(file)", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Separable d = 3 model: constant P with sectors l ∈ `degrees`.
    pub fn interior_model(&self) -> SpecResult<InteriorModel> {
        let c = self
            .angular
            .constant_value()
            .ok_or_else(|| err("angular.kind", "ladder models need a constant angular potential"))?;
        if self.dimension != 3 {
            return Err(err("dimension", "ladder models are three-dimensional"));
        }
        let spec = self.interior.clone().unwrap_or(InteriorSpec {
            r0: 1.0,
            ramp: None,
            offset: None,
            angular_shift: 0.0,
            degrees: vec![0],
        });
        let mut m = InteriorModel::constant_coupling(-c, spec.r0).map_err(|e| err("interior", e.to_string()))?;
        if let Some(f) = spec.ramp {
            m.f = f;
        }
        if let Some(w) = spec.offset {
            m.w = w;
        }
        m.angular_shift = spec.angular_shift;
        m.sectors = spec
            .degrees
            .iter()
            .enumerate()
            .map(|(i, &l)| SectorMode {
                mode: crate::angular::AngularMode::from_mu(i, -c - (l * (l + 1)) as f64, 2 * l + 1, 3),
                l,
            })
            .collect();
        m.validate().map_err(|e| err("interior", e.to_string()))?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_spec_round_trip() {
        let s = PotentialSpec::from_json_str(r#"{"dimension":3,"angular":{"kind":"constant","parameters":{"value":-5}}}"#).unwrap();
        assert_eq!(s.angular.constant_value(), Some(-5.0));
        assert!(s.radial.is_zero());
    }

    #[test]
    fn ladder_sigma_gives_the_half_model() {
        let s = PotentialSpec::from_json_str(r#"{"angular":{"kind":"constant","parameters":{"ladder_sigma":0.5}},"interior":{"r0":1}}"#).unwrap();
        let m = s.interior_model().unwrap();
        assert!((m.sectors[0].mode.mu - crate::ladder::sigma_half_mu1()).abs() < 1e-12);
        assert_eq!(m, InteriorModel::sigma_half());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let e = PotentialSpec::from_json_str(r#"{"angular":{"kind":"hemisphere","parameters":{"epsilon":0.01,"parity":"sideways"}}}"#).unwrap_err();
        assert_eq!(e.field, "angular.parameters.parity");
        let e = PotentialSpec::from_json_str(r#"{"angular":{"kind":"constant","parameters":{"value":-5}},"radial":{"kind":"log_power","parameters":{"c":1}}}"#).unwrap_err();
        assert_eq!(e.field, "radial.parameters.p");
        let e = PotentialSpec::from_json_str(r#"{"angular":{"kind":"constant","parameters":{"value":-5}},"colour":1}"#).unwrap_err();
        assert_eq!(e.field, "colour");
        let e = PotentialSpec::from_json_str("{\n\"angular\": {\n  \"kind\": ,\n}}").unwrap_err();
        assert_eq!(e.line, Some(3));
    }
}
