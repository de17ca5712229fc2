//! Flat key-value experiment configuration and its published schema.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Transform,
    Roundtrip,
    Stability,
    Simulate,
    FkCompare,
    SpdeResidual,
    Translation,
    S5Identity,
    Accept,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::Transform,
        Subcommand::Roundtrip,
        Subcommand::Stability,
        Subcommand::Simulate,
        Subcommand::FkCompare,
        Subcommand::SpdeResidual,
        Subcommand::Translation,
        Subcommand::S5Identity,
        Subcommand::Accept,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Transform => "transform",
            Subcommand::Roundtrip => "roundtrip",
            Subcommand::Stability => "stability",
            Subcommand::Simulate => "simulate",
            Subcommand::FkCompare => "fk-compare",
            Subcommand::SpdeResidual => "spde-residual",
            Subcommand::Translation => "translation",
            Subcommand::S5Identity => "s5-identity",
            Subcommand::Accept => "accept",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Subcommand::Transform => {
                "Solve for the transformed path and write it with solver diagnostics"
            }
            Subcommand::Roundtrip => {
                "Check that the transform and its inverse compose to the identity"
            }
            Subcommand::Stability => {
                "Evaluate both sides of the stability estimate on seeded path pairs"
            }
            Subcommand::Simulate => "Simulate an Euler–Maruyama batch and write it in binary form",
            Subcommand::FkCompare => "Compare the scalar, dual and PDE Feynman–Kac values",
            Subcommand::SpdeResidual => "Weak-form residual of the lifted, transformed diffusion",
            Subcommand::Translation => {
                "Translation-semigroup representation with optional potential wrapper"
            }
            Subcommand::S5Identity => {
                "Compare the weighted dual semigroup with the frozen-potential factorization"
            }
            Subcommand::Accept => "Run the acceptance suite",
        }
    }

    pub fn parse(name: &str) -> Option<Subcommand> {
        Subcommand::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn keys(self) -> Vec<Key> {
        let mut keys = common_keys();
        keys.extend(match self {
            Subcommand::Transform => {
                let mut k = path_keys();
                k.extend([
                    Key::new("potential", Kind::Str, Some("kind=norm"), "potential c(t, y)"),
                    Key::new("tol", Kind::Float, Some("1e-12"), "fixed-point tolerance"),
                    Key::new("out", Kind::Str, None, "CSV file for the transformed path (default <name>_hat.csv)"),
                    Key::new("diag", Kind::Str, None, "JSON file for solver diagnostics (default <name>_diag.json)"),
                ]);
                k
            }
            Subcommand::Roundtrip => {
                let mut k = path_keys();
                k.extend([
                    Key::new("potential", Kind::Str, Some("kind=norm"), "potential c(t, y)"),
                    Key::new("tol", Kind::Float, Some("1e-12"), "fixed-point tolerance"),
                    Key::new("threshold", Kind::Float, Some("1e-9"), "largest accepted round-trip error"),
                ]);
                k
            }
            Subcommand::Stability => vec![
                Key::new("pairs", Kind::Int, Some("100"), "number of seeded path pairs"),
                Key::new("dim", Kind::Int, Some("1"), "path dimension"),
                Key::new("dt", Kind::Float, Some("1e-2"), "grid step"),
                Key::new("T", Kind::Float, Some("1"), "horizon"),
                Key::new("potential", Kind::Str, Some("kind=norm"), "potential c(t, y)"),
                Key::new("tol", Kind::Float, Some("1e-12"), "fixed-point tolerance"),
            ],
            Subcommand::Simulate => vec![
                diffusion_key(),
                Key::new("n_paths", Kind::Int, Some("1000"), "number of paths"),
                Key::new("dt", Kind::Float, Some("1e-3"), "time step"),
                Key::new("T", Kind::Float, Some("1"), "horizon"),
                Key::new("out", Kind::Str, None, "binary batch file (default <name>_paths.bin)"),
            ],
            Subcommand::FkCompare => {
                let mut k = mc_keys("1");
                k.extend([
                    Key::new("f", Kind::Str, Some("kind=plateau,level=1,inner=5,outer=7.5"), "test function f"),
                    Key::new("order", Kind::Int, Some("64"), "Hermite truncation N"),
                    Key::new("pde_nx", Kind::Int, Some("2001"), "PDE grid points"),
                    Key::new("pde_dt", Kind::Float, Some("1e-3"), "PDE time step"),
                    Key::new("truncation", Kind::Float, Some("1e-5"), "truncation budget for the scalar/dual gap"),
                    Key::new("pde_budget", Kind::Float, Some("1e-3"), "discretization budget for gaps against the PDE"),
                    Key::new("anchor", Kind::Float, None, "closed-form value compared with the scalar estimate"),
                ]);
                k
            }
            Subcommand::SpdeResidual => {
                let mut k = mc_keys("1");
                k.retain(|k| k.name != "t");
                k.extend([
                    Key::new("f", Kind::Str, Some("kind=gaussian,amplitude=1,center=0.3,width=0.8"), "test function f"),
                    Key::new("times", Kind::FloatList, Some("0.25;0.5;1"), "query times"),
                    Key::new("order", Kind::Int, Some("64"), "Hermite truncation N"),
                ]);
                k
            }
            Subcommand::Translation => vec![
                Key::new("u0", Kind::Str, Some("kind=gaussian_density,mean=0,variance=1"), "initial function u0"),
                Key::new("sigma", Kind::Float, Some("1"), "shift volatility"),
                Key::new("drift", Kind::Float, Some("0"), "shift drift"),
                Key::new("order", Kind::Int, Some("64"), "Hermite truncation N"),
                Key::new("n_paths", Kind::Int, Some("20000"), "number of shifts"),
                Key::new("dt", Kind::Float, Some("1e-2"), "time step"),
                Key::new("t", Kind::Float, Some("0.5"), "query time"),
                Key::new("potential", Kind::Str, None, "potential c(t, x, y) for the mean-path wrapper"),
                Key::new("tolerance", Kind::Float, Some("1e-4"), "budget added to 3 SE against the closed form"),
            ],
            Subcommand::S5Identity => {
                let mut k = mc_keys("1");
                k.extend([
                    Key::new("f", Kind::Str, Some("kind=gaussian,amplitude=1,center=0,width=1"), "test function f"),
                    Key::new("order", Kind::Int, Some("32"), "Hermite truncation N"),
                    Key::new(
                        "assert",
                        Kind::Str,
                        Some("auto"),
                        "auto | true | false; auto asserts for constant potentials and frozen diffusions",
                    ),
                ]);
                k
            }
            Subcommand::Accept => vec![Key::new("profile", Kind::Str, Some("quick"), "quick | full")],
        });
        keys
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Str,
    FloatList,
}

impl Kind {
    fn label(self) -> &'static str {
        match self {
            Kind::Float => "float",
            Kind::Int => "int",
            Kind::Str => "string",
            Kind::FloatList => "float list (';'-separated)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub default: Option<&'static str>,
    pub doc: &'static str,
}

impl Key {
    const fn new(
        name: &'static str,
        kind: Kind,
        default: Option<&'static str>,
        doc: &'static str,
    ) -> Self {
        Key {
            name,
            kind,
            default,
            doc,
        }
    }

    pub fn help(&self) -> String {
        match self.default {
            Some(d) => format!("{} [{}, default {d}]", self.doc, self.kind.label()),
            None => format!("{} [{}, optional]", self.doc, self.kind.label()),
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_917;

fn common_keys() -> Vec<Key> {
    vec![
        Key::new("seed", Kind::Int, Some("20240917"), "master seed"),
        Key::new(
            "output_dir",
            Kind::Str,
            Some("pathkac-out"),
            "directory for reports and series",
        ),
        Key::new(
            "name",
            Kind::Str,
            None,
            "report name (default: the subcommand)",
        ),
    ]
}

fn path_keys() -> Vec<Key> {
    vec![
        Key::new(
            "input",
            Kind::Str,
            None,
            "CSV path (t, y_1, ..., y_d); generated when absent",
        ),
        Key::new(
            "path_kind",
            Kind::Str,
            Some("random_walk"),
            "generated path: random_walk | sine | constant",
        ),
        Key::new("dim", Kind::Int, Some("1"), "generated path dimension"),
        Key::new("dt", Kind::Float, Some("1e-3"), "generated path step"),
        Key::new("T", Kind::Float, Some("1"), "generated path horizon"),
    ]
}

fn diffusion_key() -> Key {
    Key::new(
        "diffusion",
        Kind::Str,
        Some(r#"{"kind":"brownian","x0":[0.0]}"#),
        "diffusion as JSON",
    )
}

fn mc_keys(t: &'static str) -> Vec<Key> {
    vec![
        diffusion_key(),
        Key::new(
            "vbar",
            Kind::Str,
            Some("kind=quadratic,a=-0.5"),
            "state potential V̄",
        ),
        Key::new("n_paths", Kind::Int, Some("100000"), "number of paths"),
        Key::new("dt", Kind::Float, Some("1e-3"), "Euler step"),
        Key::new("t", Kind::Float, Some(t), "query time"),
    ]
}

/// Typed parameter value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    FloatList(Vec<f64>),
}

/// Schema-validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub name: String,
    pub parameters: BTreeMap<String, Value>,
}

fn coerce(key: &Key, raw: &toml::Value) -> Result<Value, CliError> {
    let bad = || {
        CliError::Usage(format!(
            "'{}' expects a {}, got {raw}",
            key.name,
            key.kind.label()
        ))
    };
    let from_str = |s: &str| -> Result<Value, CliError> {
        match key.kind {
            Kind::Str => Ok(Value::Str(s.to_string())),
            Kind::Int => s.trim().parse::<i64>().map(Value::Int).map_err(|_| bad()),
            Kind::Float => s.trim().parse::<f64>().map(Value::Float).map_err(|_| bad()),
            Kind::FloatList => s
                .split(';')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_, _>>()
                .map(Value::FloatList),
        }
    };
    match (key.kind, raw) {
        (_, toml::Value::String(s)) => from_str(s),
        (Kind::Int, toml::Value::Integer(i)) => Ok(Value::Int(*i)),
        (Kind::Float, toml::Value::Integer(i)) => Ok(Value::Float(*i as f64)),
        (Kind::Float, toml::Value::Float(x)) => Ok(Value::Float(*x)),
        (Kind::Int, toml::Value::Float(x)) if x.fract() == 0.0 => Ok(Value::Int(*x as i64)),
        (Kind::FloatList, toml::Value::Array(a)) => a
            .iter()
            .map(|v| match v {
                toml::Value::Float(x) => Ok(*x),
                toml::Value::Integer(i) => Ok(*i as f64),
                _ => Err(bad()),
            })
            .collect::<Result<_, _>>()
            .map(Value::FloatList),
        _ => Err(bad()),
    }
}

impl ExperimentConfig {
    /// Validates `raw` against the schema of `subcommand` and fills defaults.
    pub fn from_raw(
        subcommand: Subcommand,
        raw: &BTreeMap<String, toml::Value>,
    ) -> Result<Self, CliError> {
        let keys = subcommand.keys();
        if let Some(k) = raw
            .keys()
            .find(|k| !keys.iter().any(|key| key.name == k.as_str()))
        {
            let known: Vec<&str> = keys.iter().map(|k| k.name).collect();
            return Err(CliError::Usage(format!(
                "unknown key '{k}' for {subcommand} (known: {})",
                known.join(", ")
            )));
        }
        let mut parameters = BTreeMap::new();
        for key in &keys {
            let value = match (raw.get(key.name), key.default) {
                (Some(v), _) => coerce(key, v)?,
                (None, Some(d)) => coerce(key, &toml::Value::String(d.to_string()))?,
                (None, None) => continue,
            };
            parameters.insert(key.name.to_string(), value);
        }
        let seed = match parameters.remove("seed") {
            Some(Value::Int(s)) if s >= 0 => s as u64,
            _ => {
                return Err(CliError::Usage(
                    "'seed' must be a non-negative integer".into(),
                ))
            }
        };
        let output_dir = match parameters.remove("output_dir") {
            Some(Value::Str(s)) => PathBuf::from(s),
            _ => unreachable!("output_dir has a string default"),
        };
        let name = match parameters.remove("name") {
            Some(Value::Str(s)) => s,
            _ => subcommand.name().to_string(),
        };
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(CliError::Usage(format!("invalid report name '{name}'")));
        }
        let cfg = ExperimentConfig {
            subcommand,
            seed,
            output_dir,
            name,
            parameters,
        };
        cfg.check_ranges()?;
        Ok(cfg)
    }

    /// Reads a TOML file of flat `key = value` pairs; `overrides` take precedence.
    pub fn from_sources(
        subcommand: Subcommand,
        file: Option<&std::path::Path>,
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        let mut raw: BTreeMap<String, toml::Value> = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            for (k, v) in table {
                if v.is_table() {
                    return Err(CliError::Usage(format!(
                        "config key '{k}' must be a flat value"
                    )));
                }
                raw.insert(k, v);
            }
        }
        for (k, v) in overrides {
            raw.insert(k.clone(), toml::Value::String(v.clone()));
        }
        ExperimentConfig::from_raw(subcommand, &raw)
    }

    fn check_ranges(&self) -> Result<(), CliError> {
        for (k, v) in &self.parameters {
            let ok = match (k.as_str(), v) {
                ("n_paths" | "pairs" | "dim" | "pde_nx", Value::Int(n)) => *n >= 1,
                ("order", Value::Int(n)) => *n >= 0,
                ("dt" | "T" | "tol" | "pde_dt" | "threshold", Value::Float(x)) => *x > 0.0,
                ("t" | "truncation" | "pde_budget" | "tolerance" | "sigma", Value::Float(x)) => {
                    *x >= 0.0
                }
                ("times", Value::FloatList(ts)) => !ts.is_empty() && ts.iter().all(|t| *t >= 0.0),
                _ => true,
            };
            if !ok {
                return Err(CliError::Usage(format!("'{k}' is out of range: {v:?}")));
            }
        }
        Ok(())
    }

    pub fn float(&self, key: &str) -> f64 {
        match self.parameters.get(key) {
            Some(Value::Float(x)) => *x,
            other => panic!("schema guarantees float '{key}', found {other:?}"),
        }
    }

    pub fn opt_float(&self, key: &str) -> Option<f64> {
        self.parameters.get(key).map(|_| self.float(key))
    }

    pub fn int(&self, key: &str) -> usize {
        match self.parameters.get(key) {
            Some(Value::Int(n)) => *n as usize,
            other => panic!("schema guarantees int '{key}', found {other:?}"),
        }
    }

    pub fn str(&self, key: &str) -> &str {
        match self.parameters.get(key) {
            Some(Value::Str(s)) => s,
            other => panic!("schema guarantees string '{key}', found {other:?}"),
        }
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.parameters.get(key).map(|_| self.str(key))
    }

    pub fn floats(&self, key: &str) -> &[f64] {
        match self.parameters.get(key) {
            Some(Value::FloatList(v)) => v,
            other => panic!("schema guarantees float list '{key}', found {other:?}"),
        }
    }
}

/// Schema listing for `--help`.
pub fn schema_text() -> String {
    let mut out =
        String::from("Configuration keys (flat; from --config FILE.toml or --key value):\n");
    for sub in Subcommand::ALL {
        out.push_str(&format!("\n  {sub}\n"));
        for key in sub.keys() {
            out.push_str(&format!("    {:<12} {}\n", key.name, key.help()));
        }
    }
    out
}
