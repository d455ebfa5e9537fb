//! Run configuration: a strict TOML document resolved into a network model.
//!
//! ```toml
//! [topology]
//! vertices = ["v1", "v2", "v3", "v4"]
//! sources = ["v1"]
//! sinks = ["v4"]
//! inputs = 2
//! outputs = 2
//! edges = [{ id = "e1", tail = "v1", head = "v2" }, ...]
//!
//! [coefficients]
//! mode = "random"              # or "explicit"
//! seed = 42
//! distribution = "uniform-real"
//!
//! [input]
//! kind = "qpsk"
//! dim = 2
//! ```
//!
//! Unknown tables and keys are errors.

use std::path::PathBuf;

use netimmse_core::engine::Method;
use netimmse_core::flowmodel::InputDistribution;
use netimmse_core::infogradients::Units;
use netimmse_core::netgraph::{
    build_coefficient_matrices, compact_form, random_coefficients, remove_edge, BuildOptions, CodingCoefficients,
    Factors, Form, NetworkTopology, RandomCoefficients, SystemMatrices,
};
use netimmse_core::scenarios::AscentOptions;
use netimmse_core::C64;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    topology: RawTopology,
    coefficients: RawCoefficients,
    input: RawInput,
    #[serde(default)]
    engine: RawEngine,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    ascent: RawAscent,
    #[serde(default)]
    example1: RawExample1,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    vertices: Vec<String>,
    edges: Vec<RawEdge>,
    sources: Vec<String>,
    sinks: Vec<String>,
    inputs: usize,
    outputs: usize,
    #[serde(default)]
    allow_cyclic: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    id: String,
    tail: String,
    head: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    mode: String,
    seed: Option<u64>,
    distribution: Option<String>,
    #[serde(default)]
    alpha: Vec<RawAlpha>,
    #[serde(default)]
    beta: Vec<RawBeta>,
    #[serde(default)]
    gamma: Vec<RawGamma>,
    #[serde(default)]
    remove: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlpha {
    input: usize,
    edge: String,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeta {
    from: String,
    to: String,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGamma {
    output: usize,
    edge: String,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    kind: String,
    dim: Option<usize>,
    support: Option<Vec<Vec<[f64; 2]>>>,
    probs: Option<Vec<f64>>,
    point: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEngine {
    method: String,
    nodes: Option<usize>,
    samples: usize,
    seed: u64,
    workers: usize,
    form: String,
}

impl Default for RawEngine {
    fn default() -> Self {
        Self {
            method: "quadrature".into(),
            nodes: None,
            samples: 100_000,
            seed: 42,
            workers: 1,
            form: "compact".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTolerances {
    gradient_rel: f64,
    mc_rel: f64,
    psi_abs: f64,
    step: f64,
    richardson: bool,
}

impl Default for RawTolerances {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            gradient_rel: t.gradient_rel,
            mc_rel: t.mc_rel,
            psi_abs: t.psi_abs,
            step: t.step,
            richardson: t.richardson,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: String,
    units: String,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            units: "bits".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAscent {
    step: f64,
    iterations: usize,
    budget: f64,
}

impl Default for RawAscent {
    fn default() -> Self {
        let a = AscentOptions::default();
        Self {
            step: a.step,
            iterations: a.iterations,
            budget: a.budget,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawExample1 {
    draws: u64,
}

impl Default for RawExample1 {
    fn default() -> Self {
        Self { draws: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative tolerance for quadrature gradient checks.
    pub gradient_rel: f64,
    /// Relative tolerance for Monte-Carlo gradient checks (normwise).
    pub mc_rel: f64,
    /// Absolute tolerance for the polynomial comparisons.
    pub psi_abs: f64,
    pub step: f64,
    pub richardson: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gradient_rel: 1e-3,
            mc_rel: 1e-2,
            psi_abs: 1e-10,
            step: 1e-3,
            richardson: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSource {
    Random { seed: u64, kind: RandomCoefficients },
    Explicit(CodingCoefficients),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSpec {
    pub method: Method,
    pub workers: usize,
    pub form: Form,
}

impl EngineSpec {
    pub fn seed(&self) -> u64 {
        match self.method {
            Method::MonteCarlo { seed, .. } => seed,
            Method::Quadrature { .. } => 0,
        }
    }
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: NetworkTopology,
    pub n_in: usize,
    pub n_out: usize,
    pub allow_cyclic: bool,
    pub source: CoefficientSource,
    /// Edges disconnected after the coefficients are assigned.
    pub removed: Vec<String>,
    pub input: InputDistribution,
    pub engine: EngineSpec,
    /// Seed for scenario draws and random directions.
    pub seed: u64,
    pub tolerances: Tolerances,
    pub out_dir: PathBuf,
    pub units: Units,
    pub ascent: AscentOptions,
    pub example1_draws: u64,
}

/// A configuration's network after coefficient assignment and removals.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub topology: NetworkTopology,
    pub coefficients: CodingCoefficients,
    pub system: SystemMatrices,
    pub factors: Factors,
}

impl RunConfig {
    pub fn engine_is_mc(&self) -> bool {
        matches!(self.engine.method, Method::MonteCarlo { .. })
    }

    pub fn model(&self) -> netimmse_core::Result<Model> {
        let mut coefficients = match &self.source {
            CoefficientSource::Random { seed, kind } => {
                random_coefficients(&self.topology, self.n_in, self.n_out, *seed, *kind)
            }
            CoefficientSource::Explicit(c) => c.clone(),
        };
        let mut topology = self.topology.clone();
        for e in &self.removed {
            (topology, coefficients) = remove_edge(&topology, &coefficients, e)?;
        }
        let opts = BuildOptions {
            allow_cyclic: self.allow_cyclic,
        };
        let system = build_coefficient_matrices(&topology, &coefficients, self.n_in, self.n_out, opts)?;
        let factors = match self.engine.form {
            Form::Compact => compact_form(&system, &topology)?.factors,
            Form::Full => system.full_factors(),
        };
        Ok(Model {
            topology,
            coefficients,
            system,
            factors,
        })
    }

    /// `--seed`: reseeds random coefficients, Monte-Carlo and scenario draws.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let CoefficientSource::Random { seed: s, .. } = &mut self.source {
            *s = seed;
        }
        if let Method::MonteCarlo { seed: s, .. } = &mut self.engine.method {
            *s = seed;
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |p| before[p + 1..].chars().count()) + 1;
    (line, column)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    if text.trim().is_empty() {
        return Err(ConfigError::Parse {
            line: 1,
            column: 1,
            message: "empty configuration".into(),
        });
    }
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    resolve(raw)
}

pub fn load_config(path: &std::path::Path) -> Result<(RunConfig, String), Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    Ok((parse_config(&text)?, text))
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let t = &raw.topology;
    for (k, e) in t.edges.iter().enumerate() {
        for (field, v) in [("tail", &e.tail), ("head", &e.head)] {
            if !t.vertices.contains(v) {
                return Err(invalid(format!("topology.edges[{k}].{field}"), format!("unknown vertex `{v}`")));
            }
        }
    }
    for (field, list) in [("sources", &t.sources), ("sinks", &t.sinks)] {
        for (k, v) in list.iter().enumerate() {
            if !t.vertices.contains(v) {
                return Err(invalid(format!("topology.{field}[{k}]"), format!("unknown vertex `{v}`")));
            }
        }
    }
    if t.inputs == 0 || t.outputs == 0 {
        return Err(invalid("topology.inputs", "inputs and outputs must be positive"));
    }
    let edges: Vec<(&str, &str, &str)> = t.edges.iter().map(|e| (e.id.as_str(), e.tail.as_str(), e.head.as_str())).collect();
    fn strs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }
    let topology = NetworkTopology::new(&strs(&t.vertices), &edges, &strs(&t.sources), &strs(&t.sinks))
        .map_err(|e| invalid("topology", e.to_string()))?;
    let (n_in, n_out) = (t.inputs, t.outputs);

    let c = &raw.coefficients;
    let edge = |key: String, label: &str| topology.edge_index(label).map_err(|_| invalid(key, format!("unknown edge `{label}`")));
    let source = match c.mode.as_str() {
        "random" => {
            if !(c.alpha.is_empty() && c.beta.is_empty() && c.gamma.is_empty()) {
                return Err(invalid("coefficients.mode", "random mode takes no explicit alpha/beta/gamma"));
            }
            let kind = match c.distribution.as_deref().unwrap_or("uniform-real") {
                "uniform-real" => RandomCoefficients::UniformReal,
                "complex-normal" => RandomCoefficients::ComplexNormal,
                other => return Err(invalid("coefficients.distribution", format!("unknown distribution `{other}`"))),
            };
            CoefficientSource::Random {
                seed: c.seed.ok_or_else(|| invalid("coefficients.seed", "random mode needs a seed"))?,
                kind,
            }
        }
        "explicit" => {
            if c.seed.is_some() || c.distribution.is_some() {
                return Err(invalid("coefficients.mode", "explicit mode takes no seed or distribution"));
            }
            let mut k = CodingCoefficients::new();
            for (i, a) in c.alpha.iter().enumerate() {
                let key = format!("coefficients.alpha[{i}]");
                let e = edge(format!("{key}.edge"), &a.edge)?;
                if a.input == 0 || a.input > n_in {
                    return Err(invalid(format!("{key}.input"), format!("input {} outside 1..={n_in}", a.input)));
                }
                if !topology.sources().contains(&topology.edges()[e].tail) {
                    return Err(invalid(format!("{key}.edge"), format!("edge `{}` does not leave a source", a.edge)));
                }
                k.set_alpha(a.input - 1, e, C64::new(a.re, a.im));
            }
            for (i, b) in c.beta.iter().enumerate() {
                let key = format!("coefficients.beta[{i}]");
                let from = edge(format!("{key}.from"), &b.from)?;
                let to = edge(format!("{key}.to"), &b.to)?;
                if !topology.adjacent(from, to) {
                    return Err(invalid(key, format!("edge `{}` does not feed edge `{}`", b.from, b.to)));
                }
                k.set_beta(from, to, C64::new(b.re, b.im));
            }
            for (i, g) in c.gamma.iter().enumerate() {
                let key = format!("coefficients.gamma[{i}]");
                let e = edge(format!("{key}.edge"), &g.edge)?;
                if g.output == 0 || g.output > n_out {
                    return Err(invalid(format!("{key}.output"), format!("output {} outside 1..={n_out}", g.output)));
                }
                if !topology.sinks().contains(&topology.edges()[e].head) {
                    return Err(invalid(format!("{key}.edge"), format!("edge `{}` does not enter a sink", g.edge)));
                }
                k.set_gamma(g.output - 1, e, C64::new(g.re, g.im));
            }
            CoefficientSource::Explicit(k)
        }
        other => return Err(invalid("coefficients.mode", format!("unknown mode `{other}`"))),
    };
    for (i, r) in c.remove.iter().enumerate() {
        edge(format!("coefficients.remove[{i}]"), r)?;
    }

    let input = resolve_input(&raw.input, n_in)?;

    let e = &raw.engine;
    let method = match e.method.as_str() {
        "quadrature" => Method::Quadrature { nodes: e.nodes },
        "mc" => Method::MonteCarlo {
            samples: e.samples,
            seed: e.seed,
        },
        other => return Err(invalid("engine.method", format!("unknown method `{other}` (quadrature or mc)"))),
    };
    let form = match e.form.as_str() {
        "compact" => Form::Compact,
        "full" => Form::Full,
        other => return Err(invalid("engine.form", format!("unknown form `{other}` (compact or full)"))),
    };
    if e.workers == 0 {
        return Err(invalid("engine.workers", "at least one worker"));
    }
    let units = parse_units(&raw.output.units).ok_or_else(|| invalid("output.units", "bits or nats"))?;
    let tol = &raw.tolerances;
    for (key, v) in [
        ("tolerances.gradient_rel", tol.gradient_rel),
        ("tolerances.mc_rel", tol.mc_rel),
        ("tolerances.psi_abs", tol.psi_abs),
        ("tolerances.step", tol.step),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(key, "must be positive"));
        }
    }
    let cfg = RunConfig {
        topology,
        n_in,
        n_out,
        allow_cyclic: t.allow_cyclic,
        source,
        removed: c.remove.clone(),
        input,
        engine: EngineSpec {
            method,
            workers: e.workers,
            form,
        },
        seed: e.seed,
        tolerances: Tolerances {
            gradient_rel: tol.gradient_rel,
            mc_rel: tol.mc_rel,
            psi_abs: tol.psi_abs,
            step: tol.step,
            richardson: tol.richardson,
        },
        out_dir: PathBuf::from(&raw.output.dir),
        units,
        ascent: AscentOptions {
            step: raw.ascent.step,
            iterations: raw.ascent.iterations,
            budget: raw.ascent.budget,
            ..AscentOptions::default()
        },
        example1_draws: raw.example1.draws,
    };
    cfg.model().map_err(|e| invalid("coefficients", e.to_string()))?;
    Ok(cfg)
}

pub fn parse_units(s: &str) -> Option<Units> {
    match s {
        "bits" => Some(Units::Bits),
        "nats" => Some(Units::Nats),
        _ => None,
    }
}

fn resolve_input(i: &RawInput, n_in: usize) -> Result<InputDistribution, ConfigError> {
    let dim = i.dim.unwrap_or(n_in);
    if dim != n_in {
        return Err(invalid("input.dim", format!("input dimension {dim} but topology has {n_in} inputs")));
    }
    let complex = |v: &[[f64; 2]]| v.iter().map(|p| C64::new(p[0], p[1])).collect::<Vec<_>>();
    let dist = match i.kind.as_str() {
        "bpsk" | "qpsk" | "gaussian" => InputDistribution::constellation(&i.kind, dim),
        "explicit" => {
            let support = i.support.as_ref().ok_or_else(|| invalid("input.support", "explicit input needs a support"))?;
            let support: Vec<Vec<C64>> = support.iter().map(|x| complex(x)).collect();
            for (k, x) in support.iter().enumerate() {
                if x.len() != dim {
                    return Err(invalid(format!("input.support[{k}]"), format!("length {} instead of {dim}", x.len())));
                }
            }
            match &i.probs {
                Some(p) => InputDistribution::discrete(support, p.clone()),
                None => InputDistribution::uniform(support),
            }
        }
        "point" => {
            let p = i.point.as_ref().ok_or_else(|| invalid("input.point", "point input needs a point"))?;
            if p.len() != dim {
                return Err(invalid("input.point", format!("length {} instead of {dim}", p.len())));
            }
            InputDistribution::point(complex(p))
        }
        other => return Err(invalid("input.kind", format!("unknown input kind `{other}`"))),
    };
    dist.map_err(|e| invalid("input", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[topology]
vertices = ["s", "t"]
edges = [{ id = "a", tail = "s", head = "t" }]
sources = ["s"]
sinks = ["t"]
inputs = 1
outputs = 1

[coefficients]
mode = "explicit"
alpha = [{ input = 1, edge = "a", re = 2.0 }]
gamma = [{ output = 1, edge = "a", re = 0.5, im = 0.5 }]

[input]
kind = "bpsk"
"#;

    #[test]
    fn minimal_config_resolves() {
        let cfg = parse_config(MINIMAL).unwrap();
        let m = cfg.model().unwrap();
        assert_eq!(m.system.m()[(0, 0)], C64::new(1.0, 1.0));
        assert_eq!(cfg.units, Units::Bits);
        assert_eq!(cfg.engine.method, Method::Quadrature { nodes: None });
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = MINIMAL.replace("kind = \"bpsk\"", "kind = \"bpsk\"\nflavour = 3");
        match parse_config(&text).unwrap_err() {
            ConfigError::Parse { line, column, message } => {
                assert_eq!((line, column), (17, 1));
                assert!(message.contains("flavour"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_config("[topology]\nvertices = [\"a\",\n  oops]\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(parse_config("  \n").unwrap_err(), ConfigError::Parse { line: 1, column: 1, .. }));
    }

    #[test]
    fn validation_names_key() {
        let text = MINIMAL.replace("head = \"t\"", "head = \"x\"");
        assert_eq!(
            parse_config(&text).unwrap_err(),
            invalid("topology.edges[0].head", "unknown vertex `x`")
        );
        let text = MINIMAL.replace("edge = \"a\", re = 0.5", "edge = \"b\", re = 0.5");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("coefficients.gamma[0].edge") && err.contains("`b`"), "{err}");
    }

    #[test]
    fn seed_override_reaches_every_consumer() {
        let text = MINIMAL
            .replace("mode = \"explicit\"\nalpha = [{ input = 1, edge = \"a\", re = 2.0 }]\ngamma = [{ output = 1, edge = \"a\", re = 0.5, im = 0.5 }]", "mode = \"random\"\nseed = 1")
            + "\n[engine]\nmethod = \"mc\"\nsamples = 2000\n";
        let mut cfg = parse_config(&text).unwrap();
        cfg.set_seed(9);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.engine.seed(), 9);
        assert!(matches!(cfg.source, CoefficientSource::Random { seed: 9, .. }));
    }
}
