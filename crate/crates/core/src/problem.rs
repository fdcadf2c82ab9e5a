//! Problem parameters, admissibility checks and the global weight `p`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Parameters of the weighted critical problem on Ω = B(a, R).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    pub n: usize,
    pub s: f64,
    /// Growth exponent of the weight near `a`.
    pub k: f64,
    pub kappa: f64,
    pub lambda: f64,
    /// Subcritical exponent of the perturbation, `2 ≤ q < q_s`.
    pub q: f64,
    pub p0: f64,
    /// Center of the bubble and minimum of the weight. Empty means the origin.
    pub a: Vec<f64>,
    pub eta: f64,
    /// Domain radius.
    pub radius: f64,
}

impl ProblemParams {
    /// Unit weight minimum, `k = 2`, `κ = 1`, `λ = 0`, `q = 2`, `η = 1`, `R = 5`.
    pub fn new(n: usize, s: f64) -> Self {
        Self {
            n,
            s,
            k: 2.0,
            kappa: 1.0,
            lambda: 0.0,
            q: 2.0,
            p0: 1.0,
            a: Vec::new(),
            eta: 1.0,
            radius: 5.0,
        }
    }

    pub fn q_s(&self) -> f64 {
        2.0 * self.n as f64 / (self.n as f64 - 2.0 * self.s)
    }

    /// The center as a full point of ℝⁿ.
    pub fn center(&self) -> Vec<f64> {
        if self.a.is_empty() {
            vec![0.0; self.n]
        } else {
            self.a.clone()
        }
    }

    /// Hard parameter checks. Admissibility flags are reported by [`validate`].
    pub fn check(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::invalid("n", format!("dimension {} < 3", self.n)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::invalid("s", format!("order {} outside (0, 1)", self.s)));
        }
        if !(self.p0 > 0.0 && self.p0.is_finite()) {
            return Err(Error::invalid("p0", format!("p0 = {} must be positive", self.p0)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", format!("eta = {} must be positive", self.eta)));
        }
        if !(self.radius >= 5.0 * self.eta) || !self.radius.is_finite() {
            return Err(Error::invalid(
                "R",
                format!("R = {} must be at least 5 eta = {}", self.radius, 5.0 * self.eta),
            ));
        }
        let qs = self.q_s();
        if !(self.q >= 2.0 && self.q < qs) {
            return Err(Error::invalid(
                "q",
                format!("q = {} outside [2, q_s) with q_s = {qs}", self.q),
            ));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", format!("kappa = {} must be >= 0", self.kappa)));
        }
        if !self.k.is_finite() || self.k <= 0.0 {
            return Err(Error::invalid("k", format!("k = {} must be positive", self.k)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::invalid("lambda", "lambda must be finite"));
        }
        if !self.a.is_empty() && self.a.len() != self.n {
            return Err(Error::invalid(
                "a",
                format!("center has {} coordinates, expected {}", self.a.len(), self.n),
            ));
        }
        Ok(())
    }
}

/// `2n/(n - 2s)`.
pub fn critical_exponent(n: usize, s: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid("n", format!("dimension {n} < 3")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid("s", format!("order {s} outside (0, 1)")));
    }
    Ok(2.0 * n as f64 / (n as f64 - 2.0 * s))
}

/// Upper end of the open s-interval for dimensions 3, 4, 5.
fn s_ceiling(n: usize) -> Option<f64> {
    match n {
        3 => Some(0.25),
        4 => Some(0.5),
        5 => Some(0.75),
        _ => None,
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub q_s: f64,
    pub ns_admissible: bool,
    pub k_admissible: bool,
    pub lambda_positive: bool,
    pub existence_regime: bool,
    /// Why a flag is false.
    pub reasons: Vec<String>,
    /// Boundary values that are accepted or rejected by convention.
    pub warnings: Vec<String>,
}

/// Computes all admissibility flags. Fails only on hard parameter errors.
pub fn validate(p: &ProblemParams) -> Result<ValidityReport> {
    p.check()?;
    let mut reasons = Vec::new();
    let mut warnings = Vec::new();

    let ns_admissible = match s_ceiling(p.n) {
        Some(c) => {
            if p.s == c {
                warnings.push(format!(
                    "s = {} sits on the boundary s = {c} for n = {}; the open interval is used",
                    p.s, p.n
                ));
            }
            if p.s < c {
                true
            } else {
                reasons.push(format!("n = {} needs s < {c}, got s = {}", p.n, p.s));
                false
            }
        }
        None => true,
    };

    let upper = p.n as f64 - 4.0 * p.s;
    let k_admissible = p.k >= 2.0 && p.k < upper;
    if p.k == upper {
        warnings.push(format!("k = {} equals n - 4s; treated as inadmissible", p.k));
    }
    if !k_admissible {
        reasons.push(format!("k = {} outside [2, n - 4s) = [2, {upper})", p.k));
    }

    let lambda_positive = p.lambda > 0.0;
    if !lambda_positive {
        reasons.push(format!("lambda = {} is not positive", p.lambda));
    }

    Ok(ValidityReport {
        q_s: p.q_s(),
        ns_admissible,
        k_admissible,
        lambda_positive,
        existence_regime: ns_admissible && k_admissible && lambda_positive,
        reasons,
        warnings,
    })
}

/// Power-law far field `p(r) = p_inf + coeff · r^{-power}` valid for `r ≥ start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tail {
    pub start: f64,
    pub p_inf: f64,
    pub coeff: f64,
    pub power: f64,
}

/// Which concrete weight to build from a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightVariant {
    Constant,
    TruncatedPower,
    TabulatedRadial,
}

impl WeightVariant {
    pub fn name(self) -> &'static str {
        match self {
            WeightVariant::Constant => "constant",
            WeightVariant::TruncatedPower => "truncated_power",
            WeightVariant::TabulatedRadial => "tabulated_radial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "constant" => Ok(WeightVariant::Constant),
            "truncated_power" | "truncatedpower" => Ok(WeightVariant::TruncatedPower),
            "tabulated_radial" | "tabulatedradial" => Ok(WeightVariant::TabulatedRadial),
            other => Err(Error::Config(format!("unknown weight.variant `{other}`"))),
        }
    }
}

/// A radial weight about a center point.
///
/// `TruncatedPower` is `p0 + κ r^k` up to `r = 4η` and decays like
/// `r^{-(n+1)}` towards `p0` beyond, continuously. `TabulatedRadial`
/// interpolates linearly and is constant past the last sample.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightModel {
    Constant {
        p0: f64,
    },
    TruncatedPower {
        p0: f64,
        kappa: f64,
        k: f64,
        eta: f64,
        n: usize,
    },
    TabulatedRadial {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

impl WeightModel {
    pub fn constant(p0: f64) -> Self {
        WeightModel::Constant { p0 }
    }

    pub fn truncated_power(p: &ProblemParams) -> Self {
        WeightModel::TruncatedPower {
            p0: p.p0,
            kappa: p.kappa,
            k: p.k,
            eta: p.eta,
            n: p.n,
        }
    }

    /// Table must start at `r = 0` with its smallest value, radii increasing.
    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::invalid("weight.table", "need at least two (r, p) samples"));
        }
        if radii[0] != 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "weight.table",
                "radii must start at 0 and increase strictly",
            ));
        }
        let v0 = values[0];
        if !(v0 > 0.0) || values.iter().any(|&v| !(v >= v0) || !v.is_finite()) {
            return Err(Error::invalid(
                "weight.table",
                "values must be finite with a positive minimum at r = 0",
            ));
        }
        Ok(WeightModel::TabulatedRadial { radii, values })
    }

    /// Builds the requested variant from the scalar parameters.
    pub fn from_params(p: &ProblemParams, variant: WeightVariant) -> Self {
        match variant {
            WeightVariant::Constant => WeightModel::constant(p.p0),
            WeightVariant::TruncatedPower => WeightModel::truncated_power(p),
            WeightVariant::TabulatedRadial => {
                // Samples of the truncated power weight, flattened past 4η.
                let tp = WeightModel::truncated_power(p);
                let radii: Vec<f64> = (0..=32).map(|i| 4.0 * p.eta * i as f64 / 32.0).collect();
                let values = radii.iter().map(|&r| tp.radial(r)).collect();
                WeightModel::TabulatedRadial { radii, values }
            }
        }
    }

    pub fn p0(&self) -> f64 {
        match self {
            WeightModel::Constant { p0 } | WeightModel::TruncatedPower { p0, .. } => *p0,
            WeightModel::TabulatedRadial { values, .. } => values[0],
        }
    }

    /// p as a function of the distance to the center.
    pub fn radial(&self, r: f64) -> f64 {
        match self {
            WeightModel::Constant { p0 } => *p0,
            WeightModel::TruncatedPower { p0, kappa, k, eta, n } => {
                let r4 = 4.0 * eta;
                if r <= r4 {
                    p0 + kappa * r.powf(*k)
                } else {
                    p0 + kappa * r4.powf(*k) * (r4 / r).powi(*n as i32 + 1)
                }
            }
            WeightModel::TabulatedRadial { radii, values } => {
                let last = radii.len() - 1;
                if r >= radii[last] {
                    return values[last];
                }
                let i = radii.partition_point(|&x| x <= r).max(1) - 1;
                let t = (r - radii[i]) / (radii[i + 1] - radii[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }

    /// p at a point, given the center.
    pub fn eval(&self, center: &[f64], x: &[f64]) -> f64 {
        let r = x
            .iter()
            .zip(center.iter().chain(std::iter::repeat(&0.0)))
            .map(|(xi, ai)| (xi - ai) * (xi - ai))
            .sum::<f64>()
            .sqrt();
        self.radial(r)
    }

    pub fn sup(&self) -> f64 {
        match self {
            WeightModel::Constant { p0 } => *p0,
            WeightModel::TruncatedPower { p0, kappa, k, eta, .. } => {
                p0 + kappa * (4.0 * eta).powf(*k)
            }
            WeightModel::TabulatedRadial { values, .. } => {
                values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Radii where p is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            WeightModel::Constant { .. } => Vec::new(),
            WeightModel::TruncatedPower { eta, .. } => vec![4.0 * eta],
            WeightModel::TabulatedRadial { radii, .. } => radii[1..].to_vec(),
        }
    }

    /// Far-field form of the weight.
    pub fn tail(&self) -> Tail {
        match self {
            WeightModel::Constant { p0 } => Tail {
                start: 0.0,
                p_inf: *p0,
                coeff: 0.0,
                power: 1.0,
            },
            WeightModel::TruncatedPower { p0, kappa, k, eta, n } => {
                let r4 = 4.0 * eta;
                Tail {
                    start: r4,
                    p_inf: *p0,
                    coeff: kappa * r4.powf(k + *n as f64 + 1.0),
                    power: *n as f64 + 1.0,
                }
            }
            WeightModel::TabulatedRadial { radii, values } => Tail {
                start: radii[radii.len() - 1],
                p_inf: values[values.len() - 1],
                coeff: 0.0,
                power: 1.0,
            },
        }
    }

    /// The weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            WeightModel::Constant { p0 } => WeightModel::Constant { p0: c * p0 },
            WeightModel::TruncatedPower { p0, kappa, k, eta, n } => WeightModel::TruncatedPower {
                p0: c * p0,
                kappa: c * kappa,
                k: *k,
                eta: *eta,
                n: *n,
            },
            WeightModel::TabulatedRadial { radii, values } => WeightModel::TabulatedRadial {
                radii: radii.clone(),
                values: values.iter().map(|v| c * v).collect(),
            },
        }
    }

    /// `p - p0`, same shape with a zero floor.
    pub fn excess(&self) -> Self {
        match self {
            WeightModel::Constant { .. } => WeightModel::Constant { p0: 0.0 },
            WeightModel::TruncatedPower { kappa, k, eta, n, .. } => WeightModel::TruncatedPower {
                p0: 0.0,
                kappa: *kappa,
                k: *k,
                eta: *eta,
                n: *n,
            },
            WeightModel::TabulatedRadial { radii, values } => WeightModel::TabulatedRadial {
                radii: radii.clone(),
                values: values.iter().map(|v| v - values[0]).collect(),
            },
        }
    }

    /// ∫_{|x-a|>start} (p - p_inf) dx for the power-law far field, or `None`
    /// when the tail is not integrable.
    pub fn tail_excess_integral(&self, n: usize) -> Option<f64> {
        let t = self.tail();
        if t.coeff == 0.0 {
            return Some(0.0);
        }
        let e = t.power - n as f64;
        if e <= 0.0 {
            return None;
        }
        Some(crate::special::sphere_area(n) * t.coeff * t.start.powf(-e) / e)
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: ProblemParams,
    pub variant: WeightVariant,
    /// Samples for `TabulatedRadial`, as `(r, p)` pairs.
    pub table: Option<(Vec<f64>, Vec<f64>)>,
    pub seed: u64,
}

const KNOWN_KEYS: &[&str] = &[
    "n",
    "s",
    "k",
    "kappa",
    "lambda",
    "q",
    "p0",
    "eta",
    "R",
    "weight.variant",
    "weight.table",
    "seed",
];

impl Config {
    pub fn new(params: ProblemParams, variant: WeightVariant, seed: u64) -> Self {
        Self {
            params,
            variant,
            table: None,
            seed,
        }
    }

    /// Parses `key = value` lines. `#` starts a comment.
    ///
    /// `n` and `s` are required, everything else falls back to the values of
    /// [`ProblemParams::new`], `truncated_power` and seed 0.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if map.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let real = |key: &str| -> Result<Option<f64>> {
            map.get(key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}` as a number")))
                })
                .transpose()
        };
        let n = map
            .get("n")
            .ok_or_else(|| Error::Config("missing key `n`".into()))?
            .parse::<usize>()
            .map_err(|_| Error::Config("`n`: expected a non-negative integer".into()))?;
        let s = real("s")?.ok_or_else(|| Error::Config("missing key `s`".into()))?;
        let mut params = ProblemParams::new(n, s);
        if let Some(v) = real("k")? {
            params.k = v;
        }
        if let Some(v) = real("kappa")? {
            params.kappa = v;
        }
        if let Some(v) = real("lambda")? {
            params.lambda = v;
        }
        if let Some(v) = real("q")? {
            params.q = v;
        }
        if let Some(v) = real("p0")? {
            params.p0 = v;
        }
        if let Some(v) = real("eta")? {
            params.eta = v;
            if !map.contains_key("R") {
                params.radius = 5.0 * v;
            }
        }
        if let Some(v) = real("R")? {
            params.radius = v;
        }
        let variant = match map.get("weight.variant") {
            Some(v) => WeightVariant::parse(v)?,
            None => WeightVariant::TruncatedPower,
        };
        let table = match map.get("weight.table") {
            Some(v) => Some(parse_table(v)?),
            None => None,
        };
        let seed = match map.get("seed") {
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("`seed`: cannot parse `{v}` as u64")))?,
            None => 0,
        };
        Ok(Config {
            params,
            variant,
            table,
            seed,
        })
    }

    /// The weight this config describes.
    pub fn weight(&self) -> Result<WeightModel> {
        match (&self.table, self.variant) {
            (Some((r, v)), WeightVariant::TabulatedRadial) => WeightModel::tabulated(r.clone(), v.clone()),
            _ => Ok(WeightModel::from_params(&self.params, self.variant)),
        }
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", p.n);
        let _ = writeln!(out, "s = {:?}", p.s);
        let _ = writeln!(out, "k = {:?}", p.k);
        let _ = writeln!(out, "kappa = {:?}", p.kappa);
        let _ = writeln!(out, "lambda = {:?}", p.lambda);
        let _ = writeln!(out, "q = {:?}", p.q);
        let _ = writeln!(out, "p0 = {:?}", p.p0);
        let _ = writeln!(out, "eta = {:?}", p.eta);
        let _ = writeln!(out, "R = {:?}", p.radius);
        let _ = writeln!(out, "weight.variant = {}", self.variant.name());
        if let Some((r, v)) = &self.table {
            let pairs: Vec<String> = r.iter().zip(v).map(|(a, b)| format!("{a:?}:{b:?}")).collect();
            let _ = writeln!(out, "weight.table = {}", pairs.join(", "));
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }
}

fn parse_table(v: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut radii = Vec::new();
    let mut values = Vec::new();
    for item in v.split(',') {
        let (r, p) = item
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("weight.table entry `{item}` is not `r:p`")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("weight.table: cannot parse `{t}`")))
        };
        radii.push(parse(r)?);
        values.push(parse(p)?);
    }
    Ok((radii, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss;
    use crate::special::sphere_area;
    use proptest::prelude::*;

    fn params(n: usize, s: f64, k: f64) -> ProblemParams {
        let mut p = ProblemParams::new(n, s);
        p.k = k;
        p.lambda = 1.0;
        p
    }

    #[test]
    fn admissibility_examples() {
        let r = validate(&params(6, 0.7, 2.0)).unwrap();
        assert!(r.ns_admissible && r.k_admissible && r.existence_regime);

        let r = validate(&params(3, 0.3, 2.0)).unwrap();
        assert!(!r.ns_admissible);
        assert!(r.reasons.iter().any(|m| m.contains("s < 0.25")));

        let r = validate(&params(5, 0.5, 2.0)).unwrap();
        assert!(r.ns_admissible && r.k_admissible);
    }

    #[test]
    fn boundary_values_warn() {
        let r = validate(&params(4, 0.5, 2.0)).unwrap();
        assert!(!r.ns_admissible);
        assert!(!r.warnings.is_empty());

        // k = n - 4s exactly.
        let r = validate(&params(6, 0.5, 4.0)).unwrap();
        assert!(!r.k_admissible);
        assert!(r.warnings.iter().any(|m| m.contains("n - 4s")));
    }

    #[test]
    fn hard_errors_carry_codes() {
        let mut p = ProblemParams::new(2, 0.5);
        assert_eq!(validate(&p).unwrap_err().code(), "E_DIM");
        p.n = 6;
        p.s = 1.0;
        assert_eq!(validate(&p).unwrap_err().code(), "E_ORDER");
        p.s = 0.5;
        p.p0 = 0.0;
        assert_eq!(validate(&p).unwrap_err().code(), "E_P0");
        p.p0 = 1.0;
        p.eta = -1.0;
        assert_eq!(validate(&p).unwrap_err().code(), "E_ETA");
        p.eta = 1.0;
        p.radius = 4.9;
        assert_eq!(validate(&p).unwrap_err().code(), "E_RADIUS");
        p.radius = 5.0;
        p.q = 2.4;
        assert_eq!(validate(&p).unwrap_err().code(), "E_EXPONENT");
    }

    #[test]
    fn lambda_gate() {
        let mut p = params(6, 0.5, 2.0);
        p.lambda = 0.0;
        assert!(!validate(&p).unwrap().existence_regime);
    }

    #[test]
    fn critical_exponent_values() {
        assert!((critical_exponent(3, 0.2).unwrap() - 6.0 / 2.6).abs() < 1e-15);
        assert_eq!(critical_exponent(6, 0.5).unwrap(), 2.4);
        let q = critical_exponent(4, 1e-9).unwrap();
        assert!((q - 2.0).abs() < 1e-8);
        assert!(critical_exponent(2, 0.5).is_err());
        assert!(critical_exponent(3, 0.0).is_err());
    }

    #[test]
    fn truncated_power_junction_is_continuous() {
        let w = WeightModel::truncated_power(&params(6, 0.5, 2.0));
        let r4: f64 = 4.0;
        let left = 1.0 + r4 * r4;
        let right = 1.0 + r4 * r4 * (r4 / r4).powi(7);
        assert_eq!(w.radial(r4), left);
        assert!((w.radial(r4 * (1.0 + 1e-15)) - right).abs() < 1e-12);
        assert_eq!(w.radial(0.0), 1.0);
    }

    #[test]
    fn tail_integral_matches_quadrature() {
        for (n, k, eta) in [(6usize, 2.0, 1.0), (3, 2.5, 0.3), (8, 3.0, 2.0)] {
            let mut p = params(n, 0.2, k);
            p.eta = eta;
            p.kappa = 0.7;
            let w = WeightModel::truncated_power(&p).excess();
            let r4 = 4.0 * eta;
            // Map r = r4 / t, t ∈ (0, 1].
            let closed = w.tail_excess_integral(n).unwrap();
            let breaks: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
            let num = gauss::composite(&breaks, 20, |t| {
                if t == 0.0 {
                    return 0.0;
                }
                let r = r4 / t;
                w.radial(r) * sphere_area(n) * r.powi(n as i32 - 1) * r4 / (t * t)
            });
            assert!(((num - closed) / closed).abs() < 1e-10, "{num} vs {closed}");
        }
    }

    #[test]
    fn tabulated_interpolates_and_flattens() {
        let w = WeightModel::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 4.0]).unwrap();
        assert_eq!(w.radial(0.5), 1.5);
        assert_eq!(w.radial(1.5), 3.0);
        assert_eq!(w.radial(10.0), 4.0);
        assert!(WeightModel::tabulated(vec![0.0, 1.0], vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = "n = 6\ns = 0.5\nk = 2\nkappa = 0.1\nlambda = 0.3\nq = 2.2\np0 = 1\neta = 0.5\nR = 2.5\nweight.variant = truncated_power\nseed = 42\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.params.kappa, 0.1);
        assert_eq!(c.params.radius, 2.5);
        assert_eq!(c.seed, 42);
        let again = Config::parse(&c.to_text()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn config_errors() {
        assert!(Config::parse("s = 0.5").is_err());
        assert!(Config::parse("n = 6\ns = 0.5\nfoo = 1").is_err());
        assert!(Config::parse("n = 6\ns = 0.5\ns = 0.4").is_err());
        assert!(Config::parse("n = 6\ns = abc").is_err());
        let e = Config::parse("n = 6\ns = 0.5\nweight.variant = cubic").unwrap_err();
        assert_eq!(e.code(), "E_CONFIG");
    }

    proptest! {
        #[test]
        fn weight_bounded_below_by_p0(
            n in 3usize..10, k in 2.0f64..5.0, kappa in 0.0f64..3.0, eta in 0.1f64..2.0,
            x in proptest::collection::vec(-10.0f64..10.0, 10)
        ) {
            let mut p = ProblemParams::new(n, 0.3);
            p.k = k; p.kappa = kappa; p.eta = eta; p.radius = 5.0 * eta;
            for variant in [WeightVariant::Constant, WeightVariant::TruncatedPower, WeightVariant::TabulatedRadial] {
                let w = WeightModel::from_params(&p, variant);
                let center = p.center();
                let v = w.eval(&center, &x[..n]);
                prop_assert!(v >= p.p0);
                prop_assert!(v <= w.sup() * (1.0 + 1e-15));
                prop_assert_eq!(w.eval(&center, &center), p.p0);
            }
        }

        #[test]
        fn local_bound_holds_inside_4eta(r in 0.0f64..4.0, k in 2.0f64..5.0) {
            let mut p = ProblemParams::new(6, 0.5);
            p.k = k;
            let w = WeightModel::truncated_power(&p);
            prop_assert!(w.radial(r) <= p.p0 + p.kappa * r.powf(k) + 1e-12);
        }

        #[test]
        fn validate_is_pure(n in 3usize..12, s in 0.01f64..0.99, k in 1.0f64..12.0, lambda in -1.0f64..1.0) {
            let mut p = ProblemParams::new(n, s);
            p.k = k;
            p.lambda = lambda;
            prop_assert_eq!(validate(&p), validate(&p));
        }
    }
}
