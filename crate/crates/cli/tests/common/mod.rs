#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ulrot"));
    cmd.env_remove("ULROT_THREADS");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn write_csv(path: &Path, m: &Array2<f64>) {
    let mut s = (0..m.ncols()).map(|j| format!("c{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for row in m.rows() {
        let line = row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "{line}");
    }
    std::fs::write(path, s).unwrap();
}

pub fn write_labels(path: &Path, labels: &[usize]) {
    let mut s = String::from("label\n");
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    std::fs::write(path, s).unwrap();
}

/// A two-blob pair of datasets with a planted correspondence: target point
/// `j` is a noisy copy of source point `j`, shifted and rotated in space,
/// with features that depend on the blob plus a smooth spatial signal.
pub struct Blobs {
    pub source_points: Array2<f64>,
    pub target_points: Array2<f64>,
    pub source_features: Array2<f64>,
    pub target_features: Array2<f64>,
    pub labels: Vec<usize>,
}

pub fn blobs(n: usize, seed: u64) -> Blobs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let source_points = Array2::from_shape_fn((n, 2), |(i, j)| {
        let centre = if labels[i] == 0 { -2.0 } else { 2.0 };
        (if j == 0 { centre } else { 0.0 }) + 0.5 * noise.sample(&mut rng)
    });
    let (c, s) = (0.6f64.cos(), 0.6f64.sin());
    let target_points = Array2::from_shape_fn((n, 2), |(i, j)| {
        let (x, y) = (source_points[[i, 0]], source_points[[i, 1]]);
        let v = if j == 0 { c * x - s * y + 1.0 } else { s * x + c * y - 0.5 };
        v + 0.05 * noise.sample(&mut rng)
    });
    let k = 6;
    let source_features = Array2::from_shape_fn((n, k), |(i, j)| {
        let blob = if labels[i] == 0 { -1.0 } else { 1.0 };
        let spatial = source_points[[i, 1]];
        match j % 3 {
            0 => 2.0 * blob,
            1 => spatial + 0.5 * blob,
            _ => spatial * blob,
        }
    });
    let target_features = Array2::from_shape_fn((n, k), |(i, j)| source_features[[i, j]] + 0.05 * noise.sample(&mut rng));
    let source_features = &source_features + &Array2::from_shape_fn((n, k), |_| 0.05 * noise.sample(&mut rng));
    Blobs { source_points, target_points, source_features, target_features, labels }
}

/// Writes the blob data into `dir` and returns config lines pointing at it.
pub fn write_blobs(dir: &Path, b: &Blobs) -> String {
    write_csv(&dir.join("xs.csv"), &b.source_points);
    write_csv(&dir.join("xt.csv"), &b.target_points);
    write_csv(&dir.join("fs.csv"), &b.source_features);
    write_csv(&dir.join("ft.csv"), &b.target_features);
    write_labels(&dir.join("ls.csv"), &b.labels);
    write_labels(&dir.join("lt.csv"), &b.labels);
    "source_points = xs.csv\ntarget_points = xt.csv\nsource_features = fs.csv\ntarget_features = ft.csv\n\
source_labels = ls.csv\ntarget_labels = lt.csv\n"
        .to_string()
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// 1×1 linear problem with cost 2 between the points (0,0) and (1,1).
pub fn scalar_fixture(dir: &Path, out: &str) -> PathBuf {
    std::fs::write(dir.join("p0.csv"), "x,y\n0,0\n").unwrap();
    std::fs::write(dir.join("p1.csv"), "x,y\n1,1\n").unwrap();
    write_config(
        dir,
        &format!("{out}.cfg"),
        &format!(
            "problem = ot\nsource_points = p0.csv\ntarget_points = p1.csv\nrank = 1\ntau = 1\n\
delta = 1e-13\ninner_delta = 1e-13\nmax_outer = 20000\noutput_dir = {out}\n"
        ),
    )
}
