use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use ctow::cotrain::{class_covering_bootstrap, run_cotraining, CotrainModel};
use ctow::data::{load_csv, stratified_split, Dataset, SplitPlan};
use ctow::gbdt::train_gbdt;
use ctow::metrics::{
    accuracy, contingency, cross_validate, rho, ContingencyTable, CvReport, Method,
};
use ctow::tsvm::train_tsvm;
use serde::{Deserialize, Serialize};

use crate::config::{Resolved, Settings};
use crate::error::{CliError, Result};
use crate::manifest::{Fingerprint, RunManifest, VERSION};
use crate::output::{to_json, write_atomic, write_json};

const BUNDLE_FORMAT: &str = "ctow-model";

fn load(settings: &Settings, require_labels: bool) -> Result<(Resolved, Dataset, Fingerprint)> {
    let resolved = settings.resolve()?;
    if require_labels && resolved.label_col.is_none() {
        return Err(CliError::Usage("--label-col is required".into()));
    }
    let ds = load_csv(&settings.data, resolved.label_col.as_deref())?;
    let fp = Fingerprint::of(&settings.data, ds.n_rows(), ds.n_features())?;
    Ok((resolved, ds, fp))
}

fn manifest(command: &str, r: &Resolved, fp: Fingerprint, folds: usize) -> RunManifest {
    RunManifest {
        version: VERSION.to_string(),
        command: command.to_string(),
        dataset: fp,
        label_col: r.label_col.clone(),
        methods: r.methods.clone(),
        label_rates: r.label_rates.clone(),
        folds,
        seed: r.config.seed,
        config: r.config.clone(),
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub settings: Settings,
    /// Report JSON path; the CSV summary goes next to it with a .csv
    /// extension.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub manifest: RunManifest,
    /// One block per (label rate, method), rates outermost.
    pub blocks: Vec<CvReport>,
}

pub fn run(args: &RunArgs) -> Result<()> {
    let (resolved, ds, fp) = load(&args.settings, true)?;
    let dataset_name = Path::new(&fp.file)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = manifest("run", &resolved, fp, resolved.folds);
    print!("{}", to_json(&manifest)?);

    let mut blocks = Vec::new();
    for &rate in &resolved.label_rates {
        for &method in &resolved.methods {
            let report = cross_validate(&ds, &resolved.config, method, resolved.folds, rate)?;
            eprintln!(
                "{method:<10} rate={rate:<5} mean={:.4} std={:.4} ({:.1}s)",
                report.mean, report.std, report.wall_time_secs
            );
            blocks.push(report);
        }
    }

    let mut csv = format!("{}\n", CvReport::CSV_HEADER);
    for b in &blocks {
        writeln!(csv, "{}", b.csv_row(&dataset_name)).expect("writing to a String");
    }
    write_json(&args.out, &RunReport { manifest, blocks })?;
    write_atomic(&args.out.with_extension("csv"), csv.as_bytes())
}

#[derive(Args, Debug)]
pub struct DiversityArgs {
    #[command(flatten)]
    pub settings: Settings,
    /// Fold whose test rows are scored.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    /// Train both trees on the same bootstrap.
    #[arg(long = "identical-seeds")]
    pub identical_seeds: bool,
    /// Report JSON path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LearnerAccuracy {
    pub gbdt_a: f64,
    pub gbdt_b: f64,
    pub tsvm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiversityReport {
    pub manifest: RunManifest,
    pub fold: usize,
    pub label_rate: f64,
    pub test_rows: usize,
    /// Correlation of the two trees; null when undefined.
    pub rho_tt: Option<f64>,
    /// Correlation of the TSVM (first) and tree A (second).
    pub rho_sx: Option<f64>,
    pub table_tt: ContingencyTable,
    pub table_sx: ContingencyTable,
    pub margin_density: f64,
    pub accuracy: LearnerAccuracy,
}

pub fn diversity(args: &DiversityArgs) -> Result<()> {
    let (resolved, ds, fp) = load(&args.settings, true)?;
    let rate = resolved.label_rates[0];
    let cfg = &resolved.config;
    let split = stratified_split(&ds, rate, resolved.folds, args.fold, cfg.seed)?;
    let labeled_x = ds.features().select_rows(&split.labeled_ids);
    let labeled_y = ds.labels_of(&split.labeled_ids)?;
    let unlabeled_x = ds.features().select_rows(&split.unlabeled_ids);
    let test_x = ds.features().select_rows(&split.test_ids);
    let truth = ds.labels_of(&split.test_ids)?;

    let tree = |learner: usize| -> Result<Vec<usize>> {
        let sample = class_covering_bootstrap(&split.labeled_ids, &ds, cfg.seed, learner);
        let x = ds.features().select_rows(&sample);
        let y = ds.labels_of(&sample)?;
        let m = train_gbdt(&x, &y, ds.class_count(), &cfg.gbdt)?;
        Ok(m.predict_proba(&test_x)?.argmax())
    };
    let a = tree(0)?;
    let b = tree(if args.identical_seeds { 0 } else { 1 })?;
    let tsvm = train_tsvm(
        &labeled_x,
        &labeled_y,
        ds.class_count(),
        &unlabeled_x,
        &cfg.tsvm,
    )?;
    let s = tsvm.predict_proba(&test_x)?.argmax();

    let table_tt = contingency(&a, &b, &truth)?;
    let table_sx = contingency(&s, &a, &truth)?;
    let report = DiversityReport {
        manifest: manifest("diversity", &resolved, fp, resolved.folds),
        fold: args.fold,
        label_rate: rate,
        test_rows: truth.len(),
        rho_tt: rho(&table_tt),
        rho_sx: rho(&table_sx),
        table_tt,
        table_sx,
        margin_density: tsvm.margin_density(),
        accuracy: LearnerAccuracy {
            gbdt_a: accuracy(&a, &truth)?,
            gbdt_b: accuracy(&b, &truth)?,
            tsvm: accuracy(&s, &truth)?,
        },
    };
    match &args.out {
        Some(p) => write_json(p, &report),
        None => {
            print!("{}", to_json(&report)?);
            Ok(())
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Rows with an empty label cell are used as unlabeled data.
    #[command(flatten)]
    pub settings: Settings,
    /// Model bundle path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Bundle {
    pub format: String,
    pub manifest: RunManifest,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub model: CotrainModel,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let (resolved, ds, fp) = load(&args.settings, true)?;
    let method = match resolved.methods.as_slice() {
        [m @ (Method::Ctow | Method::CtowNp | Method::CtowNt)] => *m,
        other => {
            return Err(CliError::Usage(format!(
                "train takes one of ctow, ctow-np, ctow-nt, got {other:?}"
            )))
        }
    };
    let split = SplitPlan::from_partial_labels(&ds);
    let model = run_cotraining(&ds, &split, &method.configure(&resolved.config))?;
    let mut manifest = manifest("train", &resolved, fp, 0);
    manifest.label_rates = vec![split.label_rate];
    manifest.config = method.configure(&resolved.config);
    eprintln!(
        "trained on {} labeled and {} unlabeled rows in {} rounds",
        split.labeled_ids.len(),
        split.unlabeled_ids.len(),
        model.rounds_run
    );
    write_json(
        &args.out,
        &Bundle {
            format: BUNDLE_FORMAT.into(),
            manifest,
            feature_names: ds.feature_names().to_vec(),
            class_names: ds.class_names().to_vec(),
            model,
        },
    )
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model bundle written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column to ignore if the CSV has one.
    #[arg(long = "label-col")]
    pub label_col: Option<String>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn load_bundle(path: &Path) -> Result<Bundle> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Ctow(e.into()))?;
    let bundle: Bundle =
        serde_json::from_str(&text).map_err(|e| CliError::CorruptBundle(e.to_string()))?;
    let m = &bundle.model;
    let consistent = bundle.format == BUNDLE_FORMAT
        && !m.learners.is_empty()
        && m.learners.len() == m.weights.len()
        && m.learners.iter().all(|l| l.n_features() == m.n_features)
        && bundle.class_names.len() == m.class_count
        && bundle.feature_names.len() == m.n_features;
    if !consistent {
        return Err(CliError::CorruptBundle(
            "fields do not describe one model".into(),
        ));
    }
    Ok(bundle)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let bundle = load_bundle(&args.model)?;
    let ds = load_csv(&args.data, args.label_col.as_deref())?;
    if ds.n_features() != bundle.model.n_features {
        return Err(CliError::IncompatibleModel {
            expected: bundle.model.n_features,
            found: ds.n_features(),
        });
    }
    let (proba, labels) = bundle.model.predict(ds.features())?;
    let mut out = String::from("row,class");
    for name in &bundle.class_names {
        write!(out, ",p_{name}").expect("writing to a String");
    }
    out.push('\n');
    for (i, &label) in labels.iter().enumerate() {
        write!(out, "{i},{}", bundle.class_names[label]).expect("writing to a String");
        for p in proba.row(i) {
            write!(out, ",{p}").expect("writing to a String");
        }
        out.push('\n');
    }
    match &args.out {
        Some(p) => write_atomic(p, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}
