#![allow(dead_code)]

use std::path::PathBuf;

use ctow::data::{load_csv, Dataset};
use ctow::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Two isotropic Gaussian blobs in 2-d centred at (-sep/2, 0) and (sep/2, 0)
/// with unit variance; labels alternate so classes are balanced.
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

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn wdbc() -> Dataset {
    load_csv(data_dir().join("wdbc.csv"), Some("diagnosis")).unwrap()
}
