//! Flat `key = value` configuration with dotted namespaces.
//!
//! Lines are `key = value`; `#` starts a comment; values may be wrapped in
//! double quotes. Command-line overrides use the same names as long flags
//! (`--grid.n 16` or `--grid.n=16`).

use std::collections::BTreeMap;

use crate::error::CliError;

/// Every accepted key with its default, if it has one.
const KEYS: &[(&str, Option<&str>)] = &[
    ("kernel.family", None),
    ("kernel.alpha", None),
    ("kernel.beta", None),
    ("kernel.c", Some("1")),
    ("kernel.s", None),
    ("kernel.r", None),
    ("kernel.delta", None),
    ("kernel.dr", None),
    ("kernel.values", None),
    ("lattice.basis", None),
    ("lattice.a", None),
    ("lattice.b", None),
    ("lattice.m", None),
    ("grid.n", Some("8")),
    ("grid.R", Some("1")),
    ("solver.step", None),
    ("solver.max_iters", Some("5000")),
    ("solver.stop_tol", Some("1e-10")),
    ("solver.init", Some("noise")),
    ("solver.noise", Some("0.5")),
    ("solver.starts", Some("1")),
    ("seed", None),
    ("out", Some("out")),
    ("threads", Some("0")),
    ("search.m", Some("1")),
    ("search.steps", Some("4")),
    ("search.refine_rounds", Some("2")),
    ("search.time_budget", None),
    ("sweep.steps", Some("20")),
    ("sweep.random", Some("0")),
    ("quad.order", Some("8")),
    ("quad.panels", Some("1")),
    ("perimeter.set", Some("cell")),
    ("perimeter.exterior", Some("true")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

impl Config {
    /// Parses file contents, applies overrides, rejects unknown keys and
    /// fills in defaults.
    pub fn resolve(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("config line {}: expected `key = value`", lineno + 1))
            })?;
            values.insert(k.trim().to_string(), unquote(v).to_string());
        }
        let mut args = overrides.iter();
        while let Some(arg) = args.next() {
            let flag = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Validation(format!("unexpected argument `{arg}`; use --key value")))?;
            let (k, v) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = args
                        .next()
                        .ok_or_else(|| CliError::Validation(format!("flag --{flag} needs a value")))?;
                    (flag.to_string(), v.clone())
                }
            };
            values.insert(k, unquote(&v).to_string());
        }
        if let Some(bad) = values.keys().find(|k| !known(k)) {
            return Err(CliError::Validation(format!("unknown config key `{bad}`")));
        }
        for (k, default) in KEYS {
            if let Some(d) = default {
                values.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        Ok(Self { values })
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require_str(&self, key: &str) -> Result<&str, CliError> {
        self.str(key).ok_or_else(|| CliError::Validation(format!("missing required key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Validation(format!("`{key}` must be {what}, got `{v}`"))),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.parse(key, "a number")
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, CliError> {
        self.f64(key)?.ok_or_else(|| CliError::Validation(format!("missing required key `{key}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parse(key, "a nonnegative integer")?
            .ok_or_else(|| CliError::Validation(format!("missing required key `{key}`")))
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.parse(key, "a nonnegative integer")
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        self.parse(key, "true or false")?
            .ok_or_else(|| CliError::Validation(format!("missing required key `{key}`")))
    }

    /// The seed, required for randomized commands.
    pub fn seed(&self) -> Result<u64, CliError> {
        self.u64("seed")?.ok_or_else(|| {
            CliError::Validation("missing `seed`; randomized commands need an explicit seed (e.g. --seed 1)".into())
        })
    }

    /// Comma-separated numbers.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(v) = self.str(key) else { return Ok(None) };
        v.split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| CliError::Validation(format!("`{key}` must be comma-separated numbers")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Rows separated by `;`, entries by `,`.
    pub fn matrix(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>, CliError> {
        let Some(v) = self.str(key) else { return Ok(None) };
        v.split(';')
            .map(|row| {
                row.split(',')
                    .map(|x| {
                        x.trim().parse().map_err(|_| {
                            CliError::Validation(format!("`{key}` must look like `1,0;0,1`, got `{v}`"))
                        })
                    })
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_and_defaults() {
        let text = "# comment\nkernel.family = \"gaussian\"\nkernel.alpha=2 # trailing\n\ngrid.n = 4\n";
        let c = Config::resolve(text, &["--grid.n".into(), "6".into(), "--seed=9".into()]).unwrap();
        assert_eq!(c.str("kernel.family"), Some("gaussian"));
        assert_eq!(c.f64("kernel.alpha").unwrap(), Some(2.0));
        assert_eq!(c.usize("grid.n").unwrap(), 6);
        assert_eq!(c.seed().unwrap(), 9);
        assert_eq!(c.str("out"), Some("out"));
        assert!(!c.has("solver.step"));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(Config::resolve("grid.q = 1", &[]).is_err());
        assert!(Config::resolve("grid.n", &[]).is_err());
        assert!(Config::resolve("", &["grid.n".into()]).is_err());
        assert!(Config::resolve("", &["--grid.n".into()]).is_err());
        let c = Config::resolve("grid.n = eight", &[]).unwrap();
        assert!(c.usize("grid.n").is_err());
        assert!(c.seed().is_err());
    }

    #[test]
    fn matrix_and_lists() {
        let c = Config::resolve("lattice.basis = 1,0; 0.5,2\nkernel.values = 1, 0.5,0", &[]).unwrap();
        assert_eq!(c.matrix("lattice.basis").unwrap().unwrap(), vec![vec![1.0, 0.0], vec![0.5, 2.0]]);
        assert_eq!(c.f64_list("kernel.values").unwrap().unwrap(), vec![1.0, 0.5, 0.0]);
    }
}
