//! Dataset loading and cost construction for a run.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use ulrot::geometry::sqeuclidean_factors;
use ulrot::io;
use ulrot::{FactoredCost, GwGeometry, Measure};

use crate::config::{Problem, RunConfig, SidePaths};
use crate::error::{CliError, Result};
use crate::pca::pca_project;

/// One side of the problem as read from disk.
#[derive(Debug, Clone)]
pub struct Side {
    pub weights: Array1<f64>,
    pub points: Option<Array2<f64>>,
    pub features: Option<Array2<f64>>,
    pub labels: Option<Vec<usize>>,
}

/// Loads a matrix file, naming the file in any error.
pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    io::load_matrix(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn load_vector(path: &Path) -> Result<Array1<f64>> {
    io::load_vector(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_labels(path: &Path) -> Result<Vec<usize>> {
    load_vector(path)?
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(CliError::Input(format!("{}: entry {i} is not a nonnegative integer label", path.display())))
            }
        })
        .collect()
}

fn load_side(paths: &SidePaths, name: &str) -> Result<Side> {
    let points = paths.points.as_deref().map(load_matrix).transpose()?;
    let features = paths.features.as_deref().map(load_matrix).transpose()?;
    let labels = paths.labels.as_deref().map(load_labels).transpose()?;
    let weights = paths.weights.as_deref().map(load_vector).transpose()?;
    let n = weights
        .as_ref()
        .map(|w| w.len())
        .or(points.as_ref().map(|p| p.nrows()))
        .or(features.as_ref().map(|f| f.nrows()))
        .or(labels.as_ref().map(|l| l.len()))
        .ok_or_else(|| CliError::Input(format!("no {name} data given")))?;
    let check = |what: &str, rows: Option<usize>| match rows {
        Some(r) if r != n => Err(CliError::Input(format!("{name} {what} have {r} rows, expected {n}"))),
        _ => Ok(()),
    };
    check("points", points.as_ref().map(|p| p.nrows()))?;
    check("features", features.as_ref().map(|f| f.nrows()))?;
    check("labels", labels.as_ref().map(|l| l.len()))?;
    if n == 0 {
        return Err(CliError::Input(format!("{name} side is empty")));
    }
    let weights = weights.unwrap_or_else(|| Array1::from_elem(n, 1.0 / n as f64));
    Ok(Side { weights, points, features, labels })
}

impl Side {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn measure(&self) -> Result<Measure> {
        let mut m = Measure::new(self.weights.clone())?;
        if let Some(p) = &self.points {
            m = m.with_points(p.clone())?;
        }
        Ok(m)
    }
}

/// Everything a solve needs, built once and shared across grid jobs.
pub struct Prepared {
    pub source: Side,
    pub target: Side,
    pub mu: Measure,
    pub nu: Measure,
    pub cost: Option<FactoredCost>,
    pub geom: Option<GwGeometry>,
}

fn select_columns(m: &Array2<f64>, cols: &[usize]) -> Array2<f64> {
    m.select(Axis(1), cols)
}

/// Feature columns left for the cost after removing held-out ones.
pub fn cost_columns(k: usize, cfg: &RunConfig) -> Vec<usize> {
    (0..k).filter(|c| !cfg.val_columns.contains(c) && !cfg.test_columns.contains(c)).collect()
}

fn check_columns(k: usize, cfg: &RunConfig) -> Result<()> {
    for &c in cfg.val_columns.iter().chain(&cfg.test_columns) {
        if c >= k {
            return Err(CliError::Config(format!("feature column {c} out of range for {k} features")));
        }
    }
    Ok(())
}

fn feature_cost(src: &Array2<f64>, tgt: &Array2<f64>, cfg: &RunConfig) -> Result<FactoredCost> {
    if src.ncols() != tgt.ncols() {
        return Err(CliError::Input(format!(
            "source features have {} columns, target features {}",
            src.ncols(),
            tgt.ncols()
        )));
    }
    check_columns(src.ncols(), cfg)?;
    let cols = cost_columns(src.ncols(), cfg);
    if cols.is_empty() {
        return Err(CliError::Config("no feature columns left for the cost after holding out".into()));
    }
    let (x, y) = (select_columns(src, &cols), select_columns(tgt, &cols));
    let (x, y) = match cfg.pca_dim {
        Some(k) => {
            let stacked = concatenate(Axis(0), &[x.view(), y.view()]).map_err(|e| CliError::Input(e.to_string()))?;
            let z = pca_project(&stacked.view(), k)?;
            (z.slice(s![..x.nrows(), ..]).to_owned(), z.slice(s![x.nrows().., ..]).to_owned())
        }
        None => (x, y),
    };
    Ok(sqeuclidean_factors(&x.view(), &y.view())?)
}

fn points_cost(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<FactoredCost> {
    if x.ncols() != y.ncols() {
        return Err(CliError::Input(format!("source points have {} columns, target points {}", x.ncols(), y.ncols())));
    }
    Ok(sqeuclidean_factors(x, y)?)
}

fn linear_cost(source: &Side, target: &Side, cfg: &RunConfig) -> Result<Option<FactoredCost>> {
    if let Some(path) = &cfg.cost_matrix {
        let c = load_matrix(path)?;
        if c.dim() != (source.len(), target.len()) {
            return Err(CliError::Input(format!(
                "cost matrix is {}x{}, expected {}x{}",
                c.nrows(),
                c.ncols(),
                source.len(),
                target.len()
            )));
        }
        return Ok(Some(FactoredCost::dense(c)?));
    }
    if let (Some(x), Some(y)) = (&source.features, &target.features) {
        return Ok(Some(feature_cost(x, y, cfg)?));
    }
    Ok(None)
}

fn geometry(source: &Side, target: &Side) -> Result<GwGeometry> {
    let (Some(x), Some(y)) = (&source.points, &target.points) else {
        return Err(CliError::MissingInput("points"));
    };
    Ok(GwGeometry::new(sqeuclidean_factors(&x.view(), &x.view())?, sqeuclidean_factors(&y.view(), &y.view())?)?)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let source = load_side(&cfg.source, "source")?;
    let target = load_side(&cfg.target, "target")?;
    if let Some(f) = &source.features {
        check_columns(f.ncols(), cfg)?;
    }
    let (cost, geom) = match cfg.problem {
        Problem::Ot => {
            let cost = match linear_cost(&source, &target, cfg)? {
                Some(c) => c,
                None => match (&source.points, &target.points) {
                    (Some(x), Some(y)) => points_cost(&x.view(), &y.view())?,
                    _ => return Err(CliError::MissingInput("features or points")),
                },
            };
            (Some(cost), None)
        }
        Problem::Gw => (None, Some(geometry(&source, &target)?)),
        Problem::Fgw => {
            let cost = linear_cost(&source, &target, cfg)?.ok_or(CliError::MissingInput("features"))?;
            (Some(cost), Some(geometry(&source, &target)?))
        }
    };
    let mu = source.measure()?;
    let nu = target.measure()?;
    Ok(Prepared { source, target, mu, nu, cost, geom })
}

/// Held-out target features and the source truth for the given columns.
pub fn held_out(prep: &Prepared, cols: &[usize]) -> Option<(Array2<f64>, Array2<f64>)> {
    if cols.is_empty() {
        return None;
    }
    let (Some(src), Some(tgt)) = (&prep.source.features, &prep.target.features) else {
        return None;
    };
    Some((select_columns(tgt, cols), select_columns(src, cols)))
}
