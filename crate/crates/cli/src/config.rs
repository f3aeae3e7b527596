//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. Lists
//! are comma-separated; noise modes are `amplitude:center:width` triples;
//! initial data is `gaussian:A` or `random:MIN:MAX`; `inf` is accepted for
//! any float. Keys prefixed with `diag.` configure the estimate suite.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;
use wzlab_core::diagnostics::DiagnosticsConfig;
use wzlab_core::experiments::{fmt_float, ExperimentConfig};
use wzlab_core::{InitialData, ModeDescriptor};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{location}: expected `key = value`, found `{text}`")]
    Syntax { location: String, text: String },
    #[error("{location}: unknown key `{key}`")]
    UnknownKey { location: String, key: String },
    #[error("{location}: key `{key}` is set more than once")]
    Duplicate { location: String, key: String },
    #[error("{location}: invalid value for `{key}`: {message}")]
    Value {
        location: String,
        key: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invariant(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ConfigError {
    /// Source position of a schema error, when there is one.
    pub fn location(&self) -> Option<&str> {
        match self {
            Self::Syntax { location, .. }
            | Self::UnknownKey { location, .. }
            | Self::Duplicate { location, .. }
            | Self::Value { location, .. } => Some(location),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            output_dir: PathBuf::from("wzlab-out"),
        }
    }
}

trait FlatValue: Sized {
    fn parse_flat(raw: &str) -> Result<Self, String>;
    fn fmt_flat(&self) -> String;
}

fn parse_float(raw: &str) -> Result<f64, String> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| format!("`{raw}` is not a number"))
}

impl FlatValue for f64 {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        parse_float(raw)
    }

    fn fmt_flat(&self) -> String {
        fmt_float(*self)
    }
}

impl FlatValue for usize {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        raw.trim()
            .parse()
            .map_err(|_| format!("`{raw}` is not a non-negative integer"))
    }

    fn fmt_flat(&self) -> String {
        self.to_string()
    }
}

impl FlatValue for u64 {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        raw.trim()
            .parse()
            .map_err(|_| format!("`{raw}` is not a non-negative integer"))
    }

    fn fmt_flat(&self) -> String {
        self.to_string()
    }
}

impl FlatValue for bool {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        match raw.trim() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(format!("`{other}` is not true or false")),
        }
    }

    fn fmt_flat(&self) -> String {
        self.to_string()
    }
}

impl FlatValue for PathBuf {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        if raw.trim().is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(raw.trim()))
    }

    fn fmt_flat(&self) -> String {
        self.display().to_string()
    }
}

fn split_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl FlatValue for Vec<f64> {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        split_list(raw).map(parse_float).collect()
    }

    fn fmt_flat(&self) -> String {
        self.iter().map(|x| fmt_float(*x)).collect::<Vec<_>>().join(", ")
    }
}

impl FlatValue for Vec<usize> {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        split_list(raw).map(usize::parse_flat).collect()
    }

    fn fmt_flat(&self) -> String {
        self.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
    }
}

impl FlatValue for Vec<ModeDescriptor> {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        split_list(raw)
            .map(|item| {
                let parts = item.split(':').map(parse_float).collect::<Result<Vec<_>, _>>()?;
                match parts[..] {
                    [amplitude, center, width] => Ok(ModeDescriptor::new(amplitude, center, width)),
                    _ => Err(format!("mode `{item}` is not amplitude:center:width")),
                }
            })
            .collect()
    }

    fn fmt_flat(&self) -> String {
        self.iter()
            .map(|m| format!("{}:{}:{}", fmt_float(m.amplitude), fmt_float(m.center), fmt_float(m.width)))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl FlatValue for InitialData {
    fn parse_flat(raw: &str) -> Result<Self, String> {
        let parts: Vec<&str> = raw.trim().split(':').map(str::trim).collect();
        match parts[..] {
            ["gaussian", a] => Ok(InitialData::Gaussian {
                amplitude: parse_float(a)?,
            }),
            ["random", lo, hi] => Ok(InitialData::RandomAmplitude {
                min: parse_float(lo)?,
                max: parse_float(hi)?,
            }),
            _ => Err(format!("`{raw}` is not gaussian:A or random:MIN:MAX")),
        }
    }

    fn fmt_flat(&self) -> String {
        match *self {
            InitialData::Gaussian { amplitude } => format!("gaussian:{}", fmt_float(amplitude)),
            InitialData::RandomAmplitude { min, max } => {
                format!("random:{}:{}", fmt_float(min), fmt_float(max))
            }
        }
    }
}

macro_rules! flat_keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        /// Every accepted key, in canonical order.
        pub const KEYS: &[&str] = &[$($key),*];

        fn set_key(config: &mut RunConfig, key: &str, raw: &str) -> Option<Result<(), String>> {
            match key {
                $($key => Some(FlatValue::parse_flat(raw).map(|v| config.$($field).+ = v)),)*
                _ => None,
            }
        }

        fn get_key(config: &RunConfig, key: &str) -> Option<String> {
            match key {
                $($key => Some(config.$($field).+.fmt_flat()),)*
                _ => None,
            }
        }
    };
}

flat_keys! {
    "num_points" => experiment.num_points,
    "half_length" => experiment.half_length,
    "master_steps" => experiment.master_steps,
    "substeps" => experiment.substeps,
    "records" => experiment.records,
    "modes" => experiment.modes,
    "lambda_noi" => experiment.lambda_noi,
    "lambda_ini" => experiment.lambda_ini,
    "initial" => experiment.initial,
    "n_list" => experiment.n_list,
    "m_list" => experiment.m_list,
    "rho_list" => experiment.rho_list,
    "eta" => experiment.eta,
    "paths" => experiment.paths,
    "seed" => experiment.seed,
    "ceiling" => experiment.ceiling,
    "reference_check" => experiment.reference_check,
    "stability_n" => experiment.stability_n,
    "stability_m" => experiment.stability_m,
    "deltas" => experiment.deltas,
    "tail_n" => experiment.tail_n,
    "tail_rho" => experiment.tail_rho,
    "tail_levels" => experiment.tail_levels,
    "diag.num_points" => diagnostics.num_points,
    "diag.half_length" => diagnostics.half_length,
    "diag.modes" => diagnostics.modes,
    "diag.lambda_noi" => diagnostics.lambda_noi,
    "diag.initial" => diagnostics.initial,
    "diag.seed" => diagnostics.seed,
    "diag.dispersive_samples" => diagnostics.dispersive_samples,
    "diag.p_list" => diagnostics.p_list,
    "diag.strichartz_samples" => diagnostics.strichartz_samples,
    "diag.strichartz_time_samples" => diagnostics.strichartz_time_samples,
    "diag.strichartz_ceiling" => diagnostics.strichartz_ceiling,
    "diag.burkholder_trials" => diagnostics.burkholder_trials,
    "diag.burkholder_rho" => diagnostics.burkholder_rho,
    "diag.burkholder_p" => diagnostics.burkholder_p,
    "diag.burkholder_n" => diagnostics.burkholder_n,
    "diag.burkholder_ceiling" => diagnostics.burkholder_ceiling,
    "diag.oracle_tolerance" => diagnostics.oracle_tolerance,
    "diag.kolmogorov_alpha" => diagnostics.kolmogorov_alpha,
    "diag.kolmogorov_steps" => diagnostics.kolmogorov_steps,
    "diag.kolmogorov_stride" => diagnostics.kolmogorov_stride,
    "diag.kolmogorov_trials" => diagnostics.kolmogorov_trials,
    "diag.kolmogorov_ceiling" => diagnostics.kolmogorov_ceiling,
    "diag.source_steps" => diagnostics.source_steps,
    "diag.source_eval_stride" => diagnostics.source_eval_stride,
    "diag.source_n_list" => diagnostics.source_n_list,
    "diag.source_paths" => diagnostics.source_paths,
    "diag.source_rho_list" => diagnostics.source_rho_list,
    "diag.eta" => diagnostics.eta,
    "diag.stability_tolerance" => diagnostics.stability_tolerance,
    "diag.crude_steps" => diagnostics.crude_steps,
    "diag.crude_n_list" => diagnostics.crude_n_list,
    "diag.crude_paths" => diagnostics.crude_paths,
    "diag.crude_ceiling" => diagnostics.crude_ceiling,
    "diag.linear_paths" => diagnostics.linear_paths,
    "diag.linear_steps" => diagnostics.linear_steps,
    "diag.alpha_list" => diagnostics.alpha_list,
    "diag.semigroup_samples" => diagnostics.semigroup_samples,
    "diag.semigroup_ceiling_a1" => diagnostics.semigroup_ceiling_a1,
    "diag.semigroup_ceiling_a2" => diagnostics.semigroup_ceiling_a2,
    "output_dir" => output_dir,
}

/// Applies the lines of one document to `config`. `label` names the source in
/// error messages; `seen` collects keys across documents.
fn apply(
    config: &mut RunConfig,
    text: &str,
    label: &str,
    seen: &mut Vec<String>,
) -> Result<(), ConfigError> {
    for (i, line) in text.lines().enumerate() {
        let location = format!("{label}:{}", i + 1);
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                location,
                text: body.to_string(),
            });
        };
        let key = key.trim();
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::Duplicate {
                location,
                key: key.to_string(),
            });
        }
        match set_key(config, key, value) {
            None => {
                return Err(ConfigError::UnknownKey {
                    location,
                    key: key.to_string(),
                })
            }
            Some(Err(message)) => {
                return Err(ConfigError::Value {
                    location,
                    key: key.to_string(),
                    message,
                })
            }
            Some(Ok(())) => seen.push(key.to_string()),
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parses and validates one document; absent keys keep their defaults.
    pub fn parse(text: &str, label: &str) -> Result<Self, ConfigError> {
        Self::parse_with_overrides(text, label, &[])
    }

    /// Parses `text`, then applies each `key=value` override in order. An
    /// override may replace a key set in the document but not one set by an
    /// earlier override.
    pub fn parse_with_overrides(text: &str, label: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        apply(&mut config, text, label, &mut Vec::new())?;
        let mut seen = Vec::new();
        for (i, o) in overrides.iter().enumerate() {
            apply(&mut config, o, &format!("--set #{}", i + 1), &mut seen)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::parse_with_overrides(&text, &p.display().to_string(), overrides)
            }
            None => Self::parse_with_overrides("", "<defaults>", overrides),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.experiment
            .validate()
            .map_err(|e| ConfigError::Invariant(e.to_string()))?;
        self.diagnostics
            .validate()
            .map_err(|e| ConfigError::Invariant(format!("diag: {e}")))?;
        Ok(())
    }

    /// Every key in canonical order; parsing the result gives back `self`.
    pub fn to_flat(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = get_key(self, key).expect("every listed key is readable");
            writeln!(out, "{key} = {value}").expect("writing to a String");
        }
        out
    }

    /// SHA-256 of the canonical form without `output_dir`, which never
    /// affects results.
    pub fn fingerprint(&self) -> String {
        let canonical: String = self
            .to_flat()
            .lines()
            .filter(|l| !l.starts_with("output_dir "))
            .map(|l| format!("{l}\n"))
            .collect();
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::parse("", "x").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# only a comment\n\n", "x").unwrap(), RunConfig::default());
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let err = RunConfig::parse("paths = 8\nbogus = 1\n", "cfg").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { ref location, .. } if location == "cfg:2"), "{err}");
        let err = RunConfig::parse("\n\npaths 8", "cfg").unwrap_err();
        assert_eq!(err.location(), Some("cfg:3"));
        let err = RunConfig::parse("paths = many", "cfg").unwrap_err();
        assert!(matches!(err, ConfigError::Value { .. }), "{err}");
        let err = RunConfig::parse("seed = 1\nseed = 2", "cfg").unwrap_err();
        assert!(matches!(err, ConfigError::Duplicate { ref location, .. } if location == "cfg:2"));
    }

    #[test]
    fn invariant_violations_name_the_rule() {
        let err = RunConfig::parse("n_list = 3", "cfg").unwrap_err().to_string();
        assert!(err.contains("must divide master_steps"), "{err}");
        let err = RunConfig::parse("lambda_noi = 0.5", "cfg").unwrap_err().to_string();
        assert!(err.contains("lambda_noi"), "{err}");
        let err = RunConfig::parse("initial = gaussian:5", "cfg").unwrap_err().to_string();
        assert!(err.contains("lambda_ini"), "{err}");
    }

    #[test]
    fn value_syntax() {
        let c = RunConfig::parse(
            "m_list = 2, inf\nmodes = 0.25:0:1\ninitial = random:0.5:1.0\nreference_check = false",
            "cfg",
        )
        .unwrap();
        assert_eq!(c.experiment.m_list, vec![2.0, f64::INFINITY]);
        assert_eq!(c.experiment.modes, vec![ModeDescriptor::new(0.25, 0.0, 1.0)]);
        assert_eq!(c.experiment.initial, InitialData::RandomAmplitude { min: 0.5, max: 1.0 });
        assert!(!c.experiment.reference_check);
        assert!(RunConfig::parse("modes = 1:2", "cfg").is_err());
        let silent = RunConfig::parse("modes =", "cfg").unwrap();
        assert!(silent.experiment.modes.is_empty());
    }

    #[test]
    fn overrides_apply_after_the_document() {
        let c = RunConfig::parse_with_overrides("paths = 8", "cfg", &["paths = 16".into()]).unwrap();
        assert_eq!(c.experiment.paths, 16);
        let err = RunConfig::parse_with_overrides("", "cfg", &["paths = 4".into(), "paths = 6".into()]).unwrap_err();
        assert_eq!(err.location(), Some("--set #2:1"));
    }

    #[test]
    fn fingerprint_ignores_output_dir() {
        let a = RunConfig::default();
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            ..RunConfig::default()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = RunConfig::parse("seed = 1", "cfg").unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
