//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{blobs, ctow, read_json, stderr, wdbc_path, write_csv};
use ctow::cotrain::CotrainConfig;
use ctow::data::load_csv;
use ctow::metrics::{contingency, cross_validate, rho, ContingencyTable, Method};
use ctow::tsvm::{margin_density, train_tsvm_traced, LinearUnit, TsvmConfig, TsvmModel};
use ctow::weights::{
    ensemble_proba, gradient, objective, prior_weight, project_simplex, solve_weights,
    solve_weights_traced, ProbMatrix, SolverConfig,
};
use ctow::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn random_prob_matrix(rng: &mut ChaCha8Rng, u: usize, c: usize) -> ProbMatrix {
    let rows: Vec<Vec<f64>> = (0..u)
        .map(|_| {
            let raw: Vec<f64> = (0..c).map(|_| 0.01 + rng.gen::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    ProbMatrix::from_rows(&rows).unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn majority_vote() -> Outcome {
    let p1 = ProbMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
    let p3 = ProbMatrix::from_rows(&[[0.0, 1.0]]).unwrap();
    let ps = [p1.clone(), p1, p3];
    let w = solve_weights(&ps, None, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let err = w
        .as_slice()
        .iter()
        .zip([0.5, 0.5, 0.0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure!(err < 1e-4, "w = {:?}", w.as_slice());
    let p = ensemble_proba(&ps, &w).unwrap();
    ensure!((p.row(0)[0] - 1.0).abs() < 1e-4, "P = {:?}", p.row(0));
    Ok(format!("w = {:?}", w.as_slice()))
}

fn prior() -> Outcome {
    let h = prior_weight(0.2, 0.2);
    ensure!(h == 0.25, "h(0.2, 0.2) = {h}");
    let grid: Vec<f64> = (0..=20)
        .map(|i| prior_weight(i as f64 * 0.05, 0.2))
        .collect();
    ensure!(
        grid.windows(2).all(|w| w[0] > w[1]),
        "not strictly decreasing: {grid:?}"
    );
    Ok(format!("h(0.2,0.2) = {h}, h(1,0.2) = {:.4e}", grid[20]))
}

fn brute_force_projection(x: &[f64], s: f64) -> Vec<f64> {
    let m = x.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let theta = (support.iter().map(|&i| x[i]).sum::<f64>() - s) / support.len() as f64;
        let mut v = vec![0.0; m];
        let mut feasible = true;
        for &i in &support {
            v[i] = x[i] - theta;
            feasible &= v[i] >= -1e-12;
        }
        if !feasible {
            continue;
        }
        let d: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, v));
        }
    }
    best.unwrap().1
}

fn projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let m = rng.gen_range(1..=8);
        let s = [0.25, 0.75, 1.0][trial % 3];
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fast = project_simplex(&x, s);
        let slow = brute_force_projection(&x, s);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst < 1e-8, "max deviation {worst:e}");
    Ok(format!("max deviation {worst:.1e} over 1000 vectors"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(2..=5);
        let u = rng.gen_range(1..=50);
        let c = rng.gen_range(2..=4);
        let mu = rng.gen_range(0.0..2.0);
        let ps: Vec<ProbMatrix> = (0..k).map(|_| random_prob_matrix(&mut rng, u, c)).collect();
        let w = random_weights(&mut rng, k);
        let analytic = gradient(&ps, &w, mu, 1e-12);
        let numeric: Vec<f64> = (0..k)
            .map(|j| {
                let (mut p, mut m) = (w.clone(), w.clone());
                p[j] += h;
                m[j] -= h;
                (objective(&ps, &p, mu, 1e-12) - objective(&ps, &m, mu, 1e-12)) / (2.0 * h)
            })
            .collect();
        let scale = numeric.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = analytic
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        worst = worst.max(err / scale);
    }
    ensure!(worst < 1e-4, "relative error {worst:e}");
    Ok(format!("max relative error {worst:.1e} over 100 instances"))
}

fn regularizer_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cfg = SolverConfig {
        mu: 1e6,
        ..SolverConfig::default()
    };
    let mut worst = 0.0f64;
    for k in 2..=6 {
        let ps: Vec<ProbMatrix> = (0..k)
            .map(|_| random_prob_matrix(&mut rng, 30, 3))
            .collect();
        let w = solve_weights(&ps, None, &cfg).map_err(|e| e.to_string())?;
        for &v in w.as_slice() {
            worst = worst.max((v - 1.0 / k as f64).abs());
        }
    }
    ensure!(worst < 1e-3, "max deviation from uniform {worst:e}");
    Ok(format!("max deviation from uniform {worst:.1e}"))
}

fn descent() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..500 {
        let k = rng.gen_range(2..=5);
        let u = rng.gen_range(1..=30);
        let c = rng.gen_range(2..=4);
        let ps: Vec<ProbMatrix> = (0..k).map(|_| random_prob_matrix(&mut rng, u, c)).collect();
        let mu = rng.gen_range(0.0..3.0);
        let pin = (case % 2 == 0).then(|| rng.gen_range(0.0..0.9));
        let cfg = SolverConfig {
            mu,
            ..SolverConfig::default()
        };
        let s = solve_weights_traced(&ps, pin, &cfg).map_err(|e| e.to_string())?;
        ensure!(
            s.objective <= s.initial_objective,
            "case {case}: {} > {}",
            s.objective,
            s.initial_objective
        );
    }
    Ok("500 instances".into())
}

fn tsvm_suite() -> Outcome {
    let mut swaps = 0;
    for seed in 0..5 {
        let ds = blobs(80, 1.5, 100 + seed);
        let y: Vec<usize> = ds.labels().iter().map(|l| l.unwrap()).collect();
        let lx = ds.features().select_rows(&(0..6).collect::<Vec<_>>());
        let ux = ds.features().select_rows(&(6..80).collect::<Vec<_>>());
        let fit = train_tsvm_traced(&lx, &y[..6], 2, &ux, &TsvmConfig::default())
            .map_err(|e| e.to_string())?;
        for step in fit.traces.iter().flat_map(|t| &t.trace) {
            ensure!(step.after < step.before, "swap raised objective: {step:?}");
            swaps += step.swaps;
        }
    }
    ensure!(swaps > 0, "no swaps exercised");
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
    let x = Matrix::from_rows(&[[1.0], [2.5], [-1.0], [-4.0]]).unwrap();
    let separated = margin_density(&model, &x, &[0, 0, 1, 1]).unwrap();
    let flipped = margin_density(&model, &x, &[1, 1, 0, 0]).unwrap();
    ensure!(separated == 0.0, "separated fixture gives {separated}");
    ensure!(flipped == 1.0, "misclassified fixture gives {flipped}");
    Ok(format!("{swaps} accepted swaps, density endpoints 0 and 1"))
}

fn rho_sanity() -> Outcome {
    let truth = [0, 0, 0, 0, 0, 0];
    let mixed = [0, 1, 0, 1, 1, 0];
    let r = rho(&contingency(&mixed, &mixed, &truth).unwrap());
    ensure!(r == Some(1.0), "identical classifiers give {r:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut tables = 0;
    while tables < 1000 {
        let t = ContingencyTable {
            n11: rng.gen_range(0..100),
            n10: rng.gen_range(0..100),
            n01: rng.gen_range(0..100),
            n00: rng.gen_range(0..100),
        };
        let Some(r) = rho(&t) else { continue };
        ensure!((-1.0..=1.0).contains(&r), "{t:?} gives {r}");
        tables += 1;
    }
    let r = rho(&ContingencyTable {
        n11: 40,
        n10: 25,
        n01: 25,
        n00: 10,
    })
    .unwrap();
    ensure!((r + 0.0989).abs() < 1e-4, "hand case gives {r}");
    Ok(format!("hand case {r:.6}"))
}

fn wdbc_end_to_end() -> Outcome {
    let ds = load_csv(wdbc_path(), Some("diagnosis")).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let mut means = Vec::new();
    for seed in 0..3 {
        let cfg = CotrainConfig {
            seed,
            ..CotrainConfig::default()
        };
        let report = cross_validate(&ds, &cfg, Method::Ctow, 5, 0.1).map_err(|e| e.to_string())?;
        means.push(report.mean);
    }
    let elapsed = started.elapsed();
    let mean = means.iter().sum::<f64>() / 3.0;
    ensure!(mean >= 0.90, "mean accuracy {mean:.4} ({means:?})");
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "mean accuracy {mean:.4} over seeds {means:.4?} in {:.0}s",
        elapsed.as_secs_f64()
    ))
}

fn blobs_semi_supervision() -> Outcome {
    let mut ctow_acc = Vec::new();
    let mut gbdt_acc = Vec::new();
    for seed in 0..5 {
        let ds = blobs(100, 3.0, seed);
        let cfg = CotrainConfig {
            seed,
            ..CotrainConfig::default()
        };
        let run = |m| {
            cross_validate(&ds, &cfg, m, 5, 0.1)
                .map(|r| r.mean)
                .map_err(|e| e.to_string())
        };
        ctow_acc.push(run(Method::Ctow)?);
        gbdt_acc.push(run(Method::GbdtOnly)?);
    }
    let c = ctow_acc.iter().sum::<f64>() / 5.0;
    let g = gbdt_acc.iter().sum::<f64>() / 5.0;
    ensure!(c >= g, "ctow {c:.4} < gbdt-only {g:.4}");
    Ok(format!("ctow {c:.4} vs gbdt-only {g:.4}"))
}

fn ablation_report() -> Outcome {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ablation.json");
    let data = wdbc_path();
    let o = ctow(&[
        "run",
        "--data",
        data.to_str().unwrap(),
        "--label-col",
        "diagnosis",
        "--label-rate",
        "0.1",
        "--folds",
        "5",
        "--seed",
        "42",
        "--method",
        "ctow,ctow-np,ctow-nt",
        "--out",
        out.to_str().unwrap(),
    ]);
    ensure!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        stderr(&o)
    );
    let report = read_json(&out);
    let blocks = report["blocks"].as_array().ok_or("no blocks")?;
    let methods: Vec<&str> = blocks.iter().filter_map(|b| b["method"].as_str()).collect();
    ensure!(
        methods == ["ctow", "ctow-np", "ctow-nt"],
        "methods {methods:?}"
    );
    for b in blocks {
        let folds = b["fold_accuracies"].as_array().map_or(0, Vec::len);
        ensure!(folds == 5, "{} has {folds} folds", b["method"]);
    }
    let summary: Vec<String> = blocks
        .iter()
        .map(|b| {
            format!(
                "{}={:.4}",
                b["method"].as_str().unwrap(),
                b["mean"].as_f64().unwrap()
            )
        })
        .collect();
    Ok(summary.join(" "))
}

fn determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("blobs.csv");
    write_csv(&blobs(80, 2.5, 9), &data, &[]);
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("r{run}.json"));
        let o = ctow(&[
            "run",
            "--data",
            data.to_str().unwrap(),
            "--label-col",
            "label",
            "--label-rate",
            "0.1,0.3",
            "--seed",
            "5",
            "--method",
            "ctow,ctow-np,ctow-nt,gbdt-only,tsvm-only",
            "--out",
            out.to_str().unwrap(),
        ]);
        ensure!(o.status.success(), "{}", stderr(&o));
        reports.push(std::fs::read(&out).unwrap());
    }
    ensure!(reports[0] == reports[1], "reports differ");
    Ok(format!("two {}-byte reports identical", reports[0].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        (
            "majority-vote weights",
            majority_vote,
            Some(Duration::from_secs(1)),
        ),
        ("prior function", prior, Some(Duration::from_secs(1))),
        (
            "simplex projection oracle",
            projection,
            Some(Duration::from_secs(10)),
        ),
        (
            "gradient finite differences",
            gradient_check,
            Some(Duration::from_secs(10)),
        ),
        ("regularizer limit", regularizer_limit, None),
        ("solver descent", descent, None),
        ("tsvm properties", tsvm_suite, None),
        ("rho sanity", rho_sanity, None),
        (
            "wdbc end to end",
            wdbc_end_to_end,
            Some(Duration::from_secs(300)),
        ),
        ("semi-supervision on blobs", blobs_semi_supervision, None),
        ("ablation report", ablation_report, None),
        ("report determinism", determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let mut outcome = check();
        let elapsed = started.elapsed();
        if let (Ok(_), Some(b)) = (&outcome, budget) {
            if elapsed > *b {
                outcome = Err(format!("took {elapsed:?}, budget {b:?}"));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} {:>2} {name} ({:.2}s): {detail}",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
