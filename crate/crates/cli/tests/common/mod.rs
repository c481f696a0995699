#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctow::data::Dataset;
use ctow::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctow"))
}

pub fn ctow(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ctow")
}

pub fn wdbc_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/wdbc.csv")
}

/// Two unit-variance Gaussian blobs in 2-d at (-sep/2, 0) and (sep/2, 0),
/// alternating labels.
pub fn blobs(n: usize, sep: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let cx = if y == 0 { -sep / 2.0 } else { sep / 2.0 };
        rows.push([cx + noise.sample(&mut rng), noise.sample(&mut rng)]);
        labels.push(Some(y));
    }
    Dataset::new(
        Matrix::from_rows(&rows).unwrap(),
        labels,
        2,
        vec!["x0".into(), "x1".into()],
    )
    .unwrap()
}

/// Writes `ds` as CSV with a trailing `label` column holding `a`/`b`. Rows
/// listed in `hide` get an empty label.
pub fn write_csv(ds: &Dataset, path: &Path, hide: &[usize]) {
    let mut s = String::new();
    for name in ds.feature_names() {
        write!(s, "{name},").unwrap();
    }
    s.push_str("label\n");
    for i in 0..ds.n_rows() {
        for v in ds.features().row(i) {
            write!(s, "{v},").unwrap();
        }
        if !hide.contains(&i) {
            s.push_str(["a", "b"][ds.label(i).unwrap()]);
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
