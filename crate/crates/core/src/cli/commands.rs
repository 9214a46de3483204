use std::fs;
use std::path::{Path, PathBuf};

use super::{Cli, CliError, Command, RunConfig};
use crate::chaos::lyapunov_surface;
use crate::data::{
    build_dataset, clean_series, label_ramps, load_series, split_chronological, split_quarter, synth_series,
    write_labeled_series, write_series, Dataset, RampLabel, SampleRecord, TrainTest,
};
use crate::dbn::{load_model, model_to_json, train_dbn};
use crate::eval::{count_outcomes, metrics, metrics_csv_row, roc_curve, EvalError, RocPair, METRICS_HEADER};
use crate::features::{greedy_select, DbnEvaluator, FeatureSubset};

pub const LABELS_FILE: &str = "labels.csv";
pub const CHAOS_FILE: &str = "chaos_surface.csv";
pub const SELECTION_FILE: &str = "selection.csv";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "train_report.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const INJECTIONS_FILE: &str = "injections.csv";

pub fn roc_file_name(pair: RocPair) -> String {
    format!("roc_{pair}.csv")
}

/// Parses flags and the config file, then runs the subcommand.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context {
        cfg,
        out_dir,
        quarter: cli.quarter,
    };

    match cli.command {
        Command::Label { input } => ctx.label(&ctx.input(input)?),
        Command::Chaos {
            input,
            delays,
            dimensions,
        } => {
            let delays = delays.unwrap_or_else(|| ctx.cfg.chaos.delays.clone());
            let dimensions = dimensions.unwrap_or_else(|| ctx.cfg.chaos.dimensions.clone());
            ctx.chaos(&ctx.input(input)?, &delays, &dimensions)
        }
        Command::Select { input } => ctx.select(&ctx.input(input)?),
        Command::Train { input } => ctx.train(&ctx.input(input)?),
        Command::Evaluate { input, model } => {
            let model = model
                .or_else(|| ctx.cfg.paths.model.clone())
                .unwrap_or_else(|| ctx.out_dir.join(MODEL_FILE));
            ctx.evaluate(&ctx.input(input)?, &model)
        }
        Command::Synth { samples, ramp_rate } => ctx.synth(samples, ramp_rate),
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(w) = &cli.wavelet {
        cfg.wavelet = w.clone();
    }
    if cli.no_feature_selection {
        cfg.selection.enabled = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes each file to a hidden temporary name and renames it into place.
/// On any failure every file written so far is removed.
fn write_outputs(dir: &Path, files: Vec<(String, Vec<u8>)>) -> Result<Vec<PathBuf>, CliError> {
    let fail = |e: std::io::Error, path: &Path| CliError::Input(format!("{}: {e}", path.display()));
    fs::create_dir_all(dir).map_err(|e| fail(e, dir))?;
    let mut done: Vec<PathBuf> = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(&name);
        let tmp = dir.join(format!(".{name}.partial"));
        if let Err(e) = fs::write(&tmp, &bytes).and_then(|()| fs::rename(&tmp, &path)) {
            let _ = fs::remove_file(&tmp);
            for p in &done {
                let _ = fs::remove_file(p);
            }
            return Err(fail(e, &path));
        }
        done.push(path);
    }
    Ok(done)
}

struct Context {
    cfg: RunConfig,
    out_dir: PathBuf,
    quarter: Option<u8>,
}

struct Prepared {
    records: Vec<SampleRecord>,
    labels: Vec<Option<RampLabel>>,
}

impl Context {
    fn input(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.cfg.paths.input.clone())
            .ok_or_else(|| CliError::Input("no input file given (argument or paths.input)".into()))
    }

    fn provenance(&self) -> String {
        self.cfg.provenance()
    }

    fn prepare(&self, input: &Path) -> Result<Prepared, CliError> {
        let raw = load_series(input)?;
        let cleaned = clean_series(&raw, self.cfg.ramp.sampling_minutes);
        if cleaned.removed > 0 {
            log::warn!("dropped {} invalid records from {}", cleaned.removed, input.display());
        }
        let labels = label_ramps(&cleaned.records, &self.cfg.ramp)?;
        Ok(Prepared {
            records: cleaned.records,
            labels,
        })
    }

    fn dataset(&self, prepared: &Prepared) -> Result<Dataset, CliError> {
        Ok(build_dataset(
            &prepared.records,
            &prepared.labels,
            &self.cfg.filter()?,
            self.cfg.ramp.sampling_minutes,
        )?)
    }

    fn split(&self, dataset: &Dataset) -> Result<TrainTest, CliError> {
        Ok(match self.quarter {
            Some(q) => split_quarter(dataset, q, &self.cfg.split)?,
            None => split_chronological(dataset, &self.cfg.split)?,
        })
    }

    fn run_selection(&self, train: &Dataset) -> Result<FeatureSubset, CliError> {
        let evaluator = DbnEvaluator::new(train, &self.cfg.train)?;
        let target = train.label_values();
        let subset = greedy_select(
            train.features.view(),
            &train.feature_names,
            &target,
            |s: &[usize]| evaluator.evaluate(s),
            self.cfg.selection.max_features,
        )?;
        Ok(subset)
    }

    fn trace_bytes(&self, subset: &FeatureSubset) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        subset.write_trace_csv(&mut buf, &self.provenance())?;
        Ok(buf)
    }

    fn label(&self, input: &Path) -> Result<(), CliError> {
        let prepared = self.prepare(input)?;
        let mut buf = Vec::new();
        write_labeled_series(&mut buf, &self.provenance(), &prepared.records, &prepared.labels)?;
        write_outputs(&self.out_dir, vec![(LABELS_FILE.into(), buf)])?;

        let count = |l: RampLabel| prepared.labels.iter().filter(|x| **x == Some(l)).count();
        let unlabeled = prepared.labels.iter().filter(|x| x.is_none()).count();
        println!(
            "up={} down={} none={} unlabeled={}",
            count(RampLabel::Up),
            count(RampLabel::Down),
            count(RampLabel::Flat),
            unlabeled
        );
        Ok(())
    }

    fn chaos(&self, input: &Path, delays: &[usize], dimensions: &[usize]) -> Result<(), CliError> {
        let prepared = self.prepare(input)?;
        let power: Vec<f64> = prepared.records.iter().map(|r| r.power).collect();
        let surface = lyapunov_surface(&power, delays, dimensions)?;
        let mut buf = Vec::new();
        surface.write_csv(&mut buf, &self.provenance())?;
        let paths = write_outputs(&self.out_dir, vec![(CHAOS_FILE.into(), buf)])?;
        println!("wrote {}", paths[0].display());
        Ok(())
    }

    fn select(&self, input: &Path) -> Result<(), CliError> {
        let split = self.split(&self.dataset(&self.prepare(input)?)?)?;
        let subset = self.run_selection(&split.train)?;
        write_outputs(&self.out_dir, vec![(SELECTION_FILE.into(), self.trace_bytes(&subset)?)])?;
        println!(
            "selected {} features ({:?}): {}",
            subset.selected.len(),
            subset.terminated_by,
            subset.names.join(" ")
        );
        Ok(())
    }

    fn train(&self, input: &Path) -> Result<(), CliError> {
        let split = self.split(&self.dataset(&self.prepare(input)?)?)?;
        let train = &split.train;

        let mut files = Vec::new();
        let columns: Vec<usize> = if self.cfg.selection.enabled {
            let subset = self.run_selection(train)?;
            files.push((SELECTION_FILE.to_string(), self.trace_bytes(&subset)?));
            subset.selected
        } else {
            (0..train.width()).collect()
        };

        let (mut model, report) = train_dbn(train, &columns, &self.cfg.train)?;
        model.config_hash = self.cfg.hash();

        let mut rep = format!("# {}\n", self.provenance());
        rep.push_str(&format!("# selected={}\n", model.feature_names.join(" ")));
        rep.push_str("epoch,loss\n");
        for (i, loss) in report.loss_curve.iter().enumerate() {
            rep.push_str(&format!("{},{loss}\n", i + 1));
        }
        files.insert(0, (MODEL_FILE.to_string(), model_to_json(&model).into_bytes()));
        files.insert(1, (REPORT_FILE.to_string(), rep.into_bytes()));
        write_outputs(&self.out_dir, files)?;

        println!(
            "trained on {} rows with {} inputs; final loss {:.6}",
            train.len(),
            columns.len(),
            report.loss_curve.last().copied().unwrap_or(f64::NAN)
        );
        Ok(())
    }

    fn evaluate(&self, input: &Path, model_path: &Path) -> Result<(), CliError> {
        let model = load_model(model_path)?;
        if model.config_hash != self.cfg.hash() {
            log::warn!(
                "model was trained under a different configuration ({})",
                model.config_hash
            );
        }
        let split = self.split(&self.dataset(&self.prepare(input)?)?)?;
        let test = &split.test;
        if test.is_empty() {
            return Err(CliError::Shape("test set is empty".into()));
        }

        let preds = model.predict_batch(test.features.view())?;
        let predicted: Vec<RampLabel> = preds.iter().map(|p| p.label).collect();
        let report = metrics(&count_outcomes(&predicted, &test.labels)?)?;

        let name = model_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let quarter = self.quarter.map_or_else(|| "all".to_string(), |q| q.to_string());
        let row = metrics_csv_row(name, &quarter, &report);
        let mut files = vec![(
            METRICS_FILE.to_string(),
            format!("# {}\n{METRICS_HEADER}\n{row}\n", self.provenance()).into_bytes(),
        )];

        let scores: Vec<[f64; 3]> = preds.iter().map(|p| p.scores).collect();
        for pair in RocPair::ALL {
            match roc_curve(&scores, &test.labels, pair) {
                Ok(curve) => {
                    let mut buf = Vec::new();
                    curve.write_csv(&mut buf, &self.provenance())?;
                    println!("{pair}: auc={:.4}", curve.auc);
                    files.push((roc_file_name(pair), buf));
                }
                Err(e @ EvalError::MissingClass(_)) => log::warn!("skipping {pair} ROC: {e}"),
                Err(e) => return Err(e.into()),
            }
        }
        write_outputs(&self.out_dir, files)?;

        println!(
            "n={} correct={:.2}% missed={:.2}% false={:.2}% reversed={:.2}%",
            test.len(),
            100.0 * report.correct,
            100.0 * report.missed,
            100.0 * report.false_alarm,
            100.0 * report.reversed
        );
        Ok(())
    }

    fn synth(&self, samples: usize, ramp_rate: f64) -> Result<(), CliError> {
        let series = synth_series(self.cfg.seed(), samples, ramp_rate)?;
        let mut buf = Vec::new();
        write_series(&mut buf, &self.provenance(), &series.records)?;
        let mut log = format!("# {}\nstart,steps,direction,rate_w_per_min\n", self.provenance());
        for r in &series.injections {
            log.push_str(&format!("{},{},{},{}\n", r.start, r.steps, r.direction.value(), r.rate));
        }
        write_outputs(
            &self.out_dir,
            vec![(SERIES_FILE.into(), buf), (INJECTIONS_FILE.into(), log.into_bytes())],
        )?;
        println!("{} samples, {} injected ramps", samples, series.injections.len());
        Ok(())
    }
}
