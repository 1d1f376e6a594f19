//! Plain-text experiment files: one `key = value` per line, `#` comments.
//! A comma list makes a key a sweep axis; the points of an experiment are
//! the Cartesian product of all axes, in file order with the last key
//! varying fastest.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::driver::{DriverConfig, Variant};
use crate::error::{Error, Result};
use crate::flight::FlightConfig;
use crate::graph::GraphModel;

/// Keys that may take a comma list.
const AXES: [&str; 9] = ["variant", "model", "n", "m", "epsilon", "base_c", "kappa", "theory_beta", "beta"];

const KEYS: &[&str] = &[
    "variant",
    "model",
    "n",
    "m",
    "epsilon",
    "base_c",
    "kappa",
    "theory_beta",
    "beta",
    "seeds",
    "check_flight",
    "retries",
    "timeout_ms",
    "wall_clock",
];

/// Edge count as a function of `n`: an integer, or `[c]n[^e][/d]`
/// such as `4n`, `n^1.5` or `n^2/8`. Rounded to the nearest integer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub text: String,
    coef: f64,
    exp: f64,
    div: f64,
}

impl Density {
    pub fn edges(&self, n: usize) -> usize {
        (self.coef * (n as f64).powf(self.exp) / self.div).round() as usize
    }
}

impl FromStr for Density {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let text = s.trim().to_string();
        let bad = || Error::Param(format!("bad edge count {text:?}"));
        let num = |t: &str| t.trim().parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0);
        if let Ok(m) = text.parse::<u64>() {
            return Ok(Density { coef: m as f64, exp: 0.0, div: 1.0, text });
        }
        let (body, div) = match text.split_once('/') {
            Some((b, d)) => (b, num(d).ok_or_else(bad)?),
            None => (text.as_str(), 1.0),
        };
        let (coef, rest) = body.split_once('n').ok_or_else(bad)?;
        let coef = if coef.trim().is_empty() { 1.0 } else { num(coef.trim_end_matches('*')).ok_or_else(bad)? };
        let exp = match rest.trim() {
            "" => 1.0,
            r => num(r.strip_prefix('^').ok_or_else(bad)?).ok_or_else(bad)?,
        };
        Ok(Density { text, coef, exp, div })
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Er,
    Complete,
    Path,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "er" | "erdos-renyi" => Ok(ModelKind::Er),
            "complete" => Ok(ModelKind::Complete),
            "path" => Ok(ModelKind::Path),
            other => Err(Error::Param(format!("unknown graph model {other:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Er => "er",
            ModelKind::Complete => "complete",
            ModelKind::Path => "path",
        })
    }
}

/// One point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPoint {
    pub variant: Variant,
    pub model: ModelKind,
    pub n: usize,
    pub density: Density,
    pub epsilon: f64,
    pub base_c: f64,
    pub kappa: f64,
    pub theory_beta: bool,
    /// Words per message.
    pub beta: usize,
    /// Also compare the outermost light-edge set with the brute-force oracle.
    pub check_flight: bool,
    /// Fresh-randomness reruns of a flagged run.
    pub retries: usize,
    pub timeout_ms: u64,
    /// Record wall time; off makes the CSV reproducible byte for byte.
    pub wall_clock: bool,
}

impl ExperimentPoint {
    pub fn graph_model(&self) -> Result<GraphModel> {
        Ok(match self.model {
            ModelKind::Er => GraphModel::ErdosRenyi { n: self.n, m: self.density.edges(self.n) },
            ModelKind::Complete => GraphModel::Complete { n: self.n },
            ModelKind::Path => GraphModel::Path { n: self.n },
        })
    }

    pub fn driver(&self) -> DriverConfig {
        DriverConfig {
            variant: self.variant,
            epsilon: self.epsilon,
            base_c: self.base_c,
            flight: FlightConfig { kappa: self.kappa, theory_beta: self.theory_beta, ..FlightConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub points: Vec<ExperimentPoint>,
    pub seeds: Range<u64>,
}

/// `a..b`, or a count `k` meaning `0..k`.
pub fn parse_seeds(s: &str) -> Result<Range<u64>> {
    let bad = || Error::Param(format!("bad seed range {s:?}"));
    let r = match s.trim().split_once("..") {
        Some((a, b)) => a.trim().parse().map_err(|_| bad())?..b.trim().parse().map_err(|_| bad())?,
        None => 0..s.trim().parse().map_err(|_| bad())?,
    };
    if r.is_empty() {
        return Err(bad());
    }
    Ok(r)
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Param(format!("expected a boolean, got {other:?}"))),
    }
}

fn parse_num<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Param(format!("bad value {s:?} for {key}")))
}

/// Parsed fields: every value of a sweep axis, in order.
#[derive(Default)]
struct Axes {
    variant: Vec<Variant>,
    model: Vec<ModelKind>,
    n: Vec<usize>,
    m: Vec<Density>,
    epsilon: Vec<f64>,
    base_c: Vec<f64>,
    kappa: Vec<f64>,
    theory_beta: Vec<bool>,
    beta: Vec<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: Vec<(String, Vec<String>, usize)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or(Error::Parse { line: line_no, msg: "expected key = value".into() })?;
            let key = k.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Parse { line: line_no, msg: format!("unknown key {key:?}") });
            }
            if raw.iter().any(|(k, _, _)| *k == key) {
                return Err(Error::Parse { line: line_no, msg: format!("duplicate key {key:?}") });
            }
            let values: Vec<String> = v.split(',').map(|x| x.trim().to_string()).collect();
            if values.iter().any(String::is_empty) {
                return Err(Error::Parse { line: line_no, msg: format!("empty value for {key:?}") });
            }
            raw.push((key, values, line_no));
        }
        let at = |line: usize| move |e: Error| Error::Parse { line, msg: e.to_string() };
        fn each<T>(values: &[String], f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
            values.iter().map(|v| f(v)).collect()
        }
        let mut axes = Axes::default();
        let mut scalar: BTreeMap<String, String> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for (key, values, line) in &raw {
            let line = *line;
            match key.as_str() {
                "variant" => axes.variant = each(values, str::parse).map_err(at(line))?,
                "model" => axes.model = each(values, str::parse).map_err(at(line))?,
                "n" => axes.n = each(values, |v| parse_num("n", v)).map_err(at(line))?,
                "m" => axes.m = each(values, str::parse).map_err(at(line))?,
                "epsilon" => axes.epsilon = each(values, |v| parse_num("epsilon", v)).map_err(at(line))?,
                "base_c" => axes.base_c = each(values, |v| parse_num("base_c", v)).map_err(at(line))?,
                "kappa" => axes.kappa = each(values, |v| parse_num("kappa", v)).map_err(at(line))?,
                "theory_beta" => axes.theory_beta = each(values, parse_bool).map_err(at(line))?,
                "beta" => axes.beta = each(values, |v| parse_num("beta", v)).map_err(at(line))?,
                other => {
                    if values.len() != 1 {
                        return Err(Error::Parse { line, msg: format!("{other} takes a single value") });
                    }
                    let v = values[0].as_str();
                    match other {
                        "seeds" => parse_seeds(v).map(drop),
                        "check_flight" | "wall_clock" => parse_bool(v).map(drop),
                        _ => parse_num::<u64>(other, v).map(drop),
                    }
                    .map_err(at(line))?;
                    scalar.insert(other.to_string(), v.to_string());
                    continue;
                }
            }
            order.push(AXES.iter().copied().find(|k| k == key).unwrap_or_default());
        }
        let get = |k: &str| scalar.get(k).map(String::as_str);
        let seeds = parse_seeds(get("seeds").unwrap_or("1"))?;
        let check_flight = parse_bool(get("check_flight").unwrap_or("false"))?;
        let wall_clock = parse_bool(get("wall_clock").unwrap_or("true"))?;
        let retries: usize = parse_num("retries", get("retries").unwrap_or("2"))?;
        let timeout_ms: u64 = parse_num("timeout_ms", get("timeout_ms").unwrap_or("600000"))?;

        let defaults = DriverConfig::default();
        if axes.n.is_empty() {
            return Err(Error::Parse { line: 0, msg: "missing key \"n\"".into() });
        }
        let fill = |v: &mut Vec<f64>, d: f64| {
            if v.is_empty() {
                v.push(d)
            }
        };
        fill(&mut axes.epsilon, defaults.epsilon);
        fill(&mut axes.base_c, defaults.base_c);
        fill(&mut axes.kappa, defaults.flight.kappa);
        if axes.variant.is_empty() {
            axes.variant.push(defaults.variant);
        }
        if axes.model.is_empty() {
            axes.model.push(ModelKind::Er);
        }
        if axes.m.is_empty() {
            axes.m.push("4n".parse()?);
        }
        if axes.theory_beta.is_empty() {
            axes.theory_beta.push(false);
        }
        if axes.beta.is_empty() {
            axes.beta.push(crate::sim::SimConfig::new(2, 0).beta);
        }

        // Mixed-radix counter over the axes, last listed key fastest.
        let len = |k: &str| match k {
            "variant" => axes.variant.len(),
            "model" => axes.model.len(),
            "n" => axes.n.len(),
            "m" => axes.m.len(),
            "epsilon" => axes.epsilon.len(),
            "base_c" => axes.base_c.len(),
            "kappa" => axes.kappa.len(),
            "theory_beta" => axes.theory_beta.len(),
            _ => axes.beta.len(),
        };
        let axis_keys: Vec<&str> =
            order.iter().copied().chain(AXES.iter().copied().filter(|k| !order.contains(k))).collect();
        let total: usize = axis_keys.iter().map(|k| len(k)).product();
        let mut points = Vec::with_capacity(total);
        for code in 0..total {
            let mut idx: BTreeMap<&str, usize> = BTreeMap::new();
            let mut c = code;
            for k in axis_keys.iter().rev() {
                idx.insert(k, c % len(k));
                c /= len(k);
            }
            let p = ExperimentPoint {
                variant: axes.variant[idx["variant"]],
                model: axes.model[idx["model"]],
                n: axes.n[idx["n"]],
                density: axes.m[idx["m"]].clone(),
                epsilon: axes.epsilon[idx["epsilon"]],
                base_c: axes.base_c[idx["base_c"]],
                kappa: axes.kappa[idx["kappa"]],
                theory_beta: axes.theory_beta[idx["theory_beta"]],
                beta: axes.beta[idx["beta"]],
                check_flight,
                retries,
                timeout_ms,
                wall_clock,
            };
            p.driver().validate()?;
            points.push(p);
        }
        Ok(ExperimentConfig { points, seeds })
    }
}
