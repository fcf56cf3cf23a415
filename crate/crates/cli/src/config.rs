//! Flat key-value experiment configs with `[section]` headers.
//!
//! ```text
//! # Levy walk on the diagonal
//! [law]
//! spec = product:pareto(0.5)*2
//! [grid]
//! targets = 50,50; 100,100
//! t = 1,1
//! ```
//!
//! Keys are addressed as `section.key`. Command-line flags override file
//! values. Unknown sections and keys are rejected with their line number.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use heavywalk::Error;

/// Every accepted key, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("law.spec", "law specification, e.g. product:pareto(0.5)*2"),
    ("grid.n", "step count"),
    ("grid.n_grid", "comma-separated step counts"),
    ("grid.n_max", "largest step count summed into a Green function"),
    ("grid.targets", "points separated by ';', coordinates by ','"),
    ("grid.ray", "direction for generated targets round(r * ray)"),
    ("grid.radii", "comma-separated radii for generated targets"),
    ("grid.t", "offset vector"),
    ("grid.kappa", "line direction for drift constants"),
    ("grid.coordinate", "coordinate index (from 0)"),
    ("grid.points", "bound-check points in units of a_n, separated by ';'"),
    ("grid.x_scales", "tail levels in units of a_n"),
    ("grid.y_fracs", "step caps as fractions of the level, or 'none'"),
    ("grid.levels", "absolute tail levels"),
    ("grid.cap", "absolute cap on the largest step"),
    ("grid.lower", "lower box corner"),
    ("grid.upper", "upper box corner"),
    ("grid.window", "local-limit window in units of a_n"),
    ("grid.z_lower", "lower end of the density grid"),
    ("grid.z_upper", "upper end of the density grid"),
    ("grid.z_points", "density grid points per axis"),
    ("method.kind", "exact or mc"),
    ("method.conv", "naive, fft or auto"),
    ("method.schedule", "linear or binary"),
    ("method.walks", "Monte Carlo walk count"),
    ("method.seed", "Monte Carlo seed"),
    ("method.n_cap", "step cap per Monte Carlo walk"),
    ("method.rescale", "walk or exact-marginal"),
    ("method.samples", "number of rescaled samples"),
    ("check.theorem", "theorem id for the check subcommand"),
    ("check.regime", "centered, drift or cauchy (srt-constant)"),
    ("check.model", "density model: auto or product"),
    ("check.tol", "tolerance of the verdict rule"),
    ("check.max_growth", "largest admissible growth of the fitted constant"),
    ("check.delta", "exponent slack of the off-direction checks"),
    ("check.epsilon", "exponent loss of the unit-index tail bound"),
    ("output.dir", "artifact directory (overridden by HEAVYWALK_OUT)"),
    ("output.name", "artifact file stem"),
    ("output.format", "csv or binary (nstep)"),
];

#[derive(Debug, Clone, PartialEq)]
enum Origin {
    Line(usize),
    Flag,
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, (String, Origin)>,
    /// Directory of the config file, for relative paths.
    base: Option<PathBuf>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut cfg = Config::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse(format!("line {line_no}: unclosed section header")))?
                    .trim();
                if !KEYS.iter().any(|(k, _)| k.split('.').next() == Some(name)) {
                    return Err(Error::Parse(format!("line {line_no}: unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {line_no}: expected 'key = value'")))?;
            let section = section
                .as_ref()
                .ok_or_else(|| Error::Parse(format!("line {line_no}: key outside any section")))?;
            let full = format!("{section}.{}", key.trim());
            if !known(&full) {
                return Err(Error::Parse(format!("line {line_no}: unknown key '{full}'")));
            }
            if let Some((_, Origin::Line(first))) = cfg.values.get(&full) {
                return Err(Error::Parse(format!(
                    "line {line_no}: key '{full}' already set on line {first}"
                )));
            }
            cfg.values
                .insert(full, (value.trim().to_string(), Origin::Line(line_no)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Sets a key from the command line, overriding the file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), Error> {
        if !known(key) {
            return Err(Error::Parse(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), (value.into(), Origin::Flag));
        Ok(())
    }

    pub fn base_dir(&self) -> Option<&Path> {
        self.base.as_deref()
    }

    /// All set keys and values, sorted by key.
    pub fn entries(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .map(|(k, (v, _))| (k.clone(), v.clone()))
            .collect()
    }

    fn where_(&self, key: &str) -> String {
        match self.values.get(key) {
            Some((_, Origin::Line(l))) => format!("key '{key}' (line {l})"),
            _ => format!("--{}", key.split('.').nth(1).unwrap_or(key).replace('_', "-")),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(known(key), "{key}");
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, Error> {
        self.get(key).ok_or_else(|| {
            Error::Parse(format!(
                "missing {} (config key '{key}')",
                self.where_(key)
            ))
        })
    }

    fn convert<T: std::str::FromStr>(&self, key: &str, text: &str, what: &str) -> Result<T, Error> {
        text.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{}: expected {what}, got '{text}'", self.where_(key))))
    }

    pub fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        self.get(key)
            .map(|v| self.convert(key, v, "a number"))
            .transpose()
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, Error> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| self.convert(key, s, "a comma-separated list of numbers"))
                    .collect()
            })
            .transpose()
    }

    /// Vectors separated by ';'.
    pub fn vectors<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<Vec<T>>>, Error> {
        self.get(key)
            .map(|v| {
                v.split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|p| {
                        p.split(',')
                            .map(|s| self.convert(key, s, "';'-separated vectors of numbers"))
                            .collect()
                    })
                    .collect()
            })
            .transpose()
    }

    /// Comma-separated numbers where `none` stands for an absent value.
    pub fn optional_list(&self, key: &str) -> Result<Option<Vec<Option<f64>>>, Error> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| match s.trim() {
                        "none" => Ok(None),
                        s => self.convert(key, s, "numbers or 'none'").map(Some),
                    })
                    .collect()
            })
            .transpose()
    }

    /// One of a fixed set of words.
    pub fn choice<'a>(&self, key: &str, options: &[&'a str]) -> Result<Option<&'a str>, Error> {
        self.get(key)
            .map(|v| {
                options.iter().copied().find(|o| *o == v).ok_or_else(|| {
                    Error::Parse(format!(
                        "{}: expected one of {}, got '{v}'",
                        self.where_(key),
                        options.join(", ")
                    ))
                })
            })
            .transpose()
    }
}
