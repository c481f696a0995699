mod common;

use ctow::tsvm::{
    margin_density, train_svm, train_tsvm, train_tsvm_traced, LinearUnit, TsvmConfig, TsvmModel,
};
use ctow::Matrix;
use proptest::prelude::*;

fn labels_of(ds: &ctow::data::Dataset) -> Vec<usize> {
    ds.labels().iter().map(|l| l.unwrap()).collect()
}

#[test]
fn few_labels_many_unlabeled_on_blobs() {
    let train = common::blobs(100, 5.0, 21);
    let test = common::blobs(400, 5.0, 22);
    let y = labels_of(&train);
    let labeled: Vec<usize> = (0..4).collect();
    let unlabeled: Vec<usize> = (4..100).collect();
    let lx = train.features().select_rows(&labeled);
    let ly: Vec<usize> = labeled.iter().map(|&i| y[i]).collect();
    let ux = train.features().select_rows(&unlabeled);
    let model = train_tsvm(&lx, &ly, 2, &ux, &TsvmConfig::default()).unwrap();
    let pred = model.predict_proba(test.features()).unwrap().argmax();
    let acc = pred
        .iter()
        .zip(labels_of(&test))
        .filter(|(p, t)| **p == *t)
        .count() as f64
        / 400.0;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn without_unlabeled_rows_matches_supervised() {
    let ds = common::blobs(30, 2.0, 3);
    let y = labels_of(&ds);
    let empty = Matrix::zeros(0, 2);
    let t = train_tsvm(ds.features(), &y, 2, &empty, &TsvmConfig::default()).unwrap();
    let s = train_svm(ds.features(), &y, 2, &TsvmConfig::default()).unwrap();
    assert_eq!(
        t.decision_values(ds.features()).unwrap(),
        s.decision_values(ds.features()).unwrap()
    );
    assert!((0.0..=1.0).contains(&t.margin_density()));
}

#[test]
fn swap_batches_strictly_decrease_objective() {
    let mut swaps_seen = 0;
    for seed in 0..6 {
        let ds = common::blobs(80, 1.5, 100 + seed);
        let y = labels_of(&ds);
        let lx = ds.features().select_rows(&[0, 1, 2, 3, 4, 5]);
        let ux = ds.features().select_rows(&(6..80).collect::<Vec<_>>());
        let fit = train_tsvm_traced(&lx, &y[..6], 2, &ux, &TsvmConfig::default()).unwrap();
        for binary in &fit.traces {
            for step in &binary.trace {
                swaps_seen += step.swaps;
                assert!(step.after < step.before, "{step:?}");
            }
            // balance of pseudo labels follows the labeled positive fraction
            let pos_l = y[..6].iter().filter(|&&v| v == 0).count() as f64 / 6.0;
            let expected = (pos_l * 74.0).round();
            let got_pos = binary.pseudo.iter().filter(|&&v| v > 0.0).count() as f64;
            let got_neg = binary.pseudo.iter().filter(|&&v| v < 0.0).count() as f64;
            assert!(
                (got_pos - expected).abs() <= 1.0 || (got_neg - expected).abs() <= 1.0,
                "pos={got_pos} neg={got_neg} expected={expected}"
            );
        }
    }
    assert!(swaps_seen > 0, "fixture never exercised label switching");
}

#[test]
fn training_is_deterministic() {
    let ds = common::blobs(60, 2.0, 8);
    let y = labels_of(&ds);
    let lx = ds.features().select_rows(&[0, 1, 2, 3]);
    let ux = ds.features().select_rows(&(4..60).collect::<Vec<_>>());
    let a = train_tsvm(&lx, &y[..4], 2, &ux, &TsvmConfig::default()).unwrap();
    let b = train_tsvm(&lx, &y[..4], 2, &ux, &TsvmConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn margin_density_endpoints() {
    // unit 0 fires for x > 0, unit 1 for x < 0, functional margin 2 everywhere
    let units = vec![
        LinearUnit {
            weights: vec![1.0],
            bias: 0.0,
        },
        LinearUnit {
            weights: vec![-1.0],
            bias: 0.0,
        },
    ];
    let model = TsvmModel::from_units(units, 1.0).unwrap();
    let x = Matrix::from_rows(&[[2.0], [3.0], [-2.0], [-5.0]]).unwrap();
    assert_eq!(margin_density(&model, &x, &[0, 0, 1, 1]).unwrap(), 0.0);
    assert_eq!(margin_density(&model, &x, &[1, 1, 0, 0]).unwrap(), 1.0);
    let model = model.with_margin_density(&x, &[0, 0, 1, 1]).unwrap();
    assert_eq!(model.margin_density(), 0.0);
}

#[test]
fn wide_gap_gives_zero_margin_density() {
    let ds = common::blobs(40, 30.0, 5);
    let y = labels_of(&ds);
    let model = train_svm(ds.features(), &y, 2, &TsvmConfig::default()).unwrap();
    assert_eq!(model.margin_density(), 0.0);
}

#[test]
fn three_class_one_vs_rest() {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..60 {
        let c = i % 3;
        let centre = [[0.0, 8.0], [-8.0, -4.0], [8.0, -4.0]][c];
        let jitter = ((i * 37 % 11) as f64 - 5.0) * 0.2;
        rows.push([centre[0] + jitter, centre[1] - jitter]);
        y.push(c);
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let model = train_tsvm(
        &x.select_rows(&(0..9).collect::<Vec<_>>()),
        &y[..9],
        3,
        &x,
        &TsvmConfig::default(),
    )
    .unwrap();
    assert_eq!(model.class_count(), 3);
    assert_eq!(model.predict_proba(&x).unwrap().argmax(), y);
}

proptest! {
    #[test]
    fn probabilities_are_row_stochastic(
        rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 2), 1..30),
        temperature in 0.05f64..5.0,
    ) {
        let ds = common::blobs(30, 3.0, 1);
        let y = labels_of(&ds);
        let cfg = TsvmConfig { temperature, epochs: 100, ..TsvmConfig::default() };
        let model = train_svm(ds.features(), &y, 2, &cfg).unwrap();
        let p = model.predict_proba(&Matrix::from_rows(&rows).unwrap()).unwrap();
        for i in 0..p.rows() {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert!((0.0..=1.0).contains(&model.margin_density()));
    }
}
