//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored, as is anything after
//! a ` #` on a value line. Keys may appear once. Relative paths are resolved
//! against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ulrot::metrics::Projection;
use ulrot::SolverConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Ot,
    Gw,
    Fgw,
}

impl FromStr for Problem {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ot" => Ok(Self::Ot),
            "gw" => Ok(Self::Gw),
            "fgw" => Ok(Self::Fgw),
            other => Err(CliError::Config(format!("unknown problem '{other}', expected ot, gw or fgw"))),
        }
    }
}

impl Problem {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ot => "ot",
            Self::Gw => "gw",
            Self::Fgw => "fgw",
        }
    }
}

/// Paths of one side's data. Every field is optional; which ones are
/// required depends on the problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SidePaths {
    pub weights: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// Hyperparameter axes for grid search. Unset rank, entropy and penalty
/// axes default to [`DEFAULT_GRID_RANK`], [`DEFAULT_GRID_EPSILON`] and
/// [`DEFAULT_GRID_TAU`]; an unset `alpha` axis holds the configured `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rank: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub source: SidePaths,
    pub target: SidePaths,
    /// Dense `n × m` cost overriding the feature or point cost.
    pub cost_matrix: Option<PathBuf>,
    pub solver: SolverConfig,
    pub pca_dim: Option<usize>,
    pub val_columns: Vec<usize>,
    pub test_columns: Vec<usize>,
    pub projection: Projection,
    pub output_dir: PathBuf,
    pub grid: Grid,
}

pub const DEFAULT_GRID_RANK: [usize; 3] = [10, 50, 100];
pub const DEFAULT_GRID_EPSILON: [f64; 3] = [0.0, 0.001, 0.01];
pub const DEFAULT_GRID_TAU: [f64; 3] = [0.1, 1.0, 100.0];

const KEYS: &[&str] = &[
    "problem",
    "source_weights",
    "source_points",
    "source_features",
    "source_labels",
    "target_weights",
    "target_points",
    "target_features",
    "target_labels",
    "cost_matrix",
    "rank",
    "tau",
    "tau1",
    "tau2",
    "gamma0",
    "epsilon",
    "alpha",
    "delta",
    "inner_delta",
    "max_outer",
    "max_inner",
    "init",
    "init_floor",
    "seed",
    "warm_start",
    "gradient_mode",
    "inner_solver",
    "step_rule",
    "pca_dim",
    "val_columns",
    "test_columns",
    "projection",
    "output_dir",
    "grid_rank",
    "grid_epsilon",
    "grid_tau",
    "grid_alpha",
];

/// Splits the text into key/value pairs, rejecting malformed lines,
/// unknown keys and duplicates.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {line_no}: expected key = value")))?;
        let key = key.trim();
        let value = value.split(" #").next().unwrap_or("").trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {line_no}: empty key")));
        }
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("line {line_no}: unknown key '{key}'")));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Config(format!("line {line_no}: duplicate key '{key}'")));
        }
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, found '{value}'"))),
    }
}

fn parse_projection(value: &str) -> Result<Projection> {
    match value {
        "target-marginal" | "target_marginal" => Ok(Projection::TargetMarginal),
        "row-sum" | "row_sum" => Ok(Projection::RowSum),
        other => Err(CliError::Config(format!("projection: unknown value '{other}'"))),
    }
}

impl RunConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let path = |k: &str| get(k).filter(|v| !v.is_empty()).map(|v| base.join(v));

        let problem = get("problem").ok_or_else(|| CliError::Config("missing key 'problem'".into()))?.parse()?;
        let mut solver = SolverConfig::default();
        for (key, value) in &pairs {
            let v = value.as_str();
            match key.as_str() {
                "rank" => solver.rank = parse_value(key, v)?,
                "tau" => {
                    solver.tau1 = parse_value(key, v)?;
                    solver.tau2 = solver.tau1;
                }
                "gamma0" => solver.gamma0 = parse_value(key, v)?,
                "epsilon" => solver.epsilon = parse_value(key, v)?,
                "alpha" => solver.alpha = parse_value(key, v)?,
                "delta" => solver.delta = parse_value(key, v)?,
                "inner_delta" => solver.inner_delta = parse_value(key, v)?,
                "max_outer" => solver.max_outer = parse_value(key, v)?,
                "max_inner" => solver.max_inner = parse_value(key, v)?,
                "init" => solver.init = v.parse().map_err(|e: ulrot::Error| CliError::Config(e.to_string()))?,
                "init_floor" => solver.init_floor = parse_value(key, v)?,
                "seed" => solver.seed = parse_value(key, v)?,
                "warm_start" => solver.warm_start_duals = parse_bool(key, v)?,
                "gradient_mode" => {
                    solver.gradient_mode = v.parse().map_err(|e: ulrot::Error| CliError::Config(e.to_string()))?
                }
                "inner_solver" => {
                    solver.inner_solver = v.parse().map_err(|e: ulrot::Error| CliError::Config(e.to_string()))?
                }
                "step_rule" => solver.step_rule = v.parse().map_err(|e: ulrot::Error| CliError::Config(e.to_string()))?,
                _ => {}
            }
        }
        // Side-specific penalties win over the shared one.
        if let Some(v) = get("tau1") {
            solver.tau1 = parse_value("tau1", v)?;
        }
        if let Some(v) = get("tau2") {
            solver.tau2 = parse_value("tau2", v)?;
        }
        solver.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let grid = Grid {
            rank: get("grid_rank").map(|v| parse_list("grid_rank", v)).transpose()?.unwrap_or(DEFAULT_GRID_RANK.to_vec()),
            epsilon: get("grid_epsilon")
                .map(|v| parse_list("grid_epsilon", v))
                .transpose()?
                .unwrap_or(DEFAULT_GRID_EPSILON.to_vec()),
            tau: get("grid_tau").map(|v| parse_list("grid_tau", v)).transpose()?.unwrap_or(DEFAULT_GRID_TAU.to_vec()),
            alpha: get("grid_alpha").map(|v| parse_list("grid_alpha", v)).transpose()?.unwrap_or(vec![solver.alpha]),
        };

        Ok(Self {
            problem,
            source: SidePaths {
                weights: path("source_weights"),
                points: path("source_points"),
                features: path("source_features"),
                labels: path("source_labels"),
            },
            target: SidePaths {
                weights: path("target_weights"),
                points: path("target_points"),
                features: path("target_features"),
                labels: path("target_labels"),
            },
            cost_matrix: path("cost_matrix"),
            solver,
            pca_dim: get("pca_dim").map(|v| parse_value("pca_dim", v)).transpose()?,
            val_columns: get("val_columns").map(|v| parse_list("val_columns", v)).transpose()?.unwrap_or_default(),
            test_columns: get("test_columns").map(|v| parse_list("test_columns", v)).transpose()?.unwrap_or_default(),
            projection: get("projection").map(parse_projection).transpose()?.unwrap_or_default(),
            output_dir: path("output_dir").unwrap_or_else(|| base.join("out")),
            grid,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_lists() {
        let text = "# run\nproblem = fgw\nrank = 4\ntau = 2.5\ntau2 = 7 # tighter\nval_columns = 0, 2\n\ngrid_rank=10,50\n";
        let cfg = RunConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.problem, Problem::Fgw);
        assert_eq!(cfg.solver.rank, 4);
        assert_eq!((cfg.solver.tau1, cfg.solver.tau2), (2.5, 7.0));
        assert_eq!(cfg.val_columns, vec![0, 2]);
        assert_eq!(cfg.grid.rank, vec![10, 50]);
        assert_eq!(cfg.grid.tau, DEFAULT_GRID_TAU.to_vec());
        assert_eq!(cfg.grid.alpha, vec![cfg.solver.alpha]);
        assert_eq!(cfg.output_dir, Path::new("/data/out"));
    }

    #[test]
    fn rejects_bad_lines() {
        for (text, needle) in [
            ("problem = ot\nrank = 2\nrank = 3\n", "duplicate key 'rank'"),
            ("problem = ot\nfoo = 1\n", "unknown key 'foo'"),
            ("problem = ot\nrank\n", "line 2"),
            ("rank = 2\n", "missing key 'problem'"),
            ("problem = ot\nrank = x\n", "rank"),
            ("problem = xx\n", "unknown problem"),
            ("problem = ot\nrank = 0\n", "rank"),
        ] {
            let e = RunConfig::parse(text, Path::new(".")).unwrap_err().to_string();
            assert!(e.contains(needle), "{text:?}: {e}");
        }
    }
}
