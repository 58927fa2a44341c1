use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use sigverify::data::{
    load_dataset, parse_generic_csv, parse_svc_file, write_dataset, Dataset, Naming, OnlineSignature, Pool,
    MANIFEST_FILE,
};
use sigverify::dtw::DtwConfig;
use sigverify::eval::{
    evaluate_rnn_model, generate_synthetic_dataset, run_dtw_experiment, run_rnn_experiment, score_probe, train_trial,
    Backend, DtwExperiment, ExperimentReport, RnnExperiment, SynthConfig,
};
use sigverify::features::{extract, featurize, FeatureConfig, Variant};
use sigverify::gru::{GruModel, TrainConfig};

use crate::{
    Command, DatasetArgs, DtwArgs, Failure, FeatureArgs, NamingArg, PoolArg, ReportArgs, TrainArgs, VariantArg,
};

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

impl FeatureArgs {
    fn config(&self) -> Result<FeatureConfig, Failure> {
        if self.window.is_multiple_of(2) {
            return Err(Failure::Usage(format!("--window must be odd, got {}", self.window)));
        }
        let config = FeatureConfig {
            window_half: self.window / 2,
            level: self.level,
            variant: match self.variant {
                VariantArg::Lnps => Variant::Lnps,
                VariantArg::LnpsLevel => Variant::LnpsLevel,
                VariantArg::LnpsRi => Variant::LnpsRi,
                VariantArg::DeltaXy => Variant::DeltaXy,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

impl DtwArgs {
    fn config(&self) -> DtwConfig {
        DtwConfig {
            band_radius: self.band_radius,
            normalize_by_path: self.normalize_path,
        }
    }
}

impl TrainArgs {
    fn config(&self, seed: u64) -> Result<TrainConfig, Failure> {
        let config = TrainConfig {
            margin: self.margin,
            lambda_center: self.lambda_center,
            lambda_decay: self.lambda_decay,
            learning_rate: self.learning_rate,
            clip: self.clip,
            epochs: self.epochs,
            triplets_per_client_per_epoch: self.triplets_per_client,
            random_negative_prob: self.random_negative_prob,
            batch_size: self.batch_size,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            embedding: self.embedding,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

impl PoolArg {
    fn pool(self) -> Pool {
        match self {
            PoolArg::First10 => Pool::First10,
            PoolArg::All => Pool::All,
        }
    }
}

fn open_dataset(dir: &Path, naming: NamingArg) -> Result<Dataset, Failure> {
    let naming = match naming {
        NamingArg::Svc => Naming::Svc,
        NamingArg::Manifest => Naming::CsvManifest,
        NamingArg::Auto if dir.join(MANIFEST_FILE).is_file() => Naming::CsvManifest,
        NamingArg::Auto => Naming::Svc,
    };
    let dataset = load_dataset(dir, naming).map_err(|e| Failure::Runtime(e.to_string()))?;
    log::info!(
        "{}: {} clients, {} signatures",
        dir.display(),
        dataset.num_clients(),
        dataset.num_signatures()
    );
    Ok(dataset)
}

fn open_datasets(dirs: &[PathBuf]) -> Result<Vec<Dataset>, Failure> {
    dirs.iter().map(|d| open_dataset(d, NamingArg::Auto)).collect()
}

/// Reads one signature file, CSV by extension and SVC text otherwise.
fn read_signature(path: &Path) -> Result<OnlineSignature, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let parsed = if is_csv {
        parse_generic_csv(&text)
    } else {
        parse_svc_file(&text)
    };
    parsed.map_err(|e| io_failure(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn paths(dirs: &[PathBuf]) -> Vec<String> {
    dirs.iter().map(|p| p.display().to_string()).collect()
}

/// Prints the report and writes the optional artifacts.
fn emit(mut report: ExperimentReport, echo: serde_json::Value, output: &ReportArgs) -> Result<(), Failure> {
    let mut config = echo;
    config["experiment"] = report.config.take();
    report.config = config;
    let json = report.to_json();
    if let Some(path) = &output.report {
        write_file(path, format!("{json}\n").as_bytes())?;
    }
    if let Some(path) = &output.scores {
        write_file(path, report.scores_csv().as_bytes())?;
    }
    if output.table {
        print!("{}", report.to_table());
    } else {
        println!("{json}");
    }
    Ok(())
}

pub fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth {
            out,
            clients,
            genuine,
            forgeries,
            noise,
            seed,
        } => {
            let config = SynthConfig {
                n_clients: clients,
                genuine_per_client: genuine,
                forgeries_per_client: forgeries,
                noise,
                seed,
            };
            let dataset = generate_synthetic_dataset(&config)?;
            write_dataset(&dataset, &out).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!(
                "wrote {} signatures of {} clients to {}",
                dataset.num_signatures(),
                dataset.num_clients(),
                out.display()
            );
            Ok(())
        }
        Command::Extract {
            input,
            out,
            features,
            raw,
        } => cmd_extract(&input, &out, &features.config()?, raw),
        Command::Train {
            dataset,
            aux,
            features,
            train,
            templates,
            pool,
            seed,
            out,
        } => {
            let exp = RnnExperiment {
                n_templates: templates,
                pool: pool.pool(),
                trials: 1,
                ..RnnExperiment::new(features.config()?, train.config(seed)?, seed)
            };
            let data = open_dataset(&dataset.data, dataset.naming)?;
            let (split, outcome) = train_trial(&data, &open_datasets(&aux)?, &exp, 0)?;
            write_file(&out, &outcome.model.to_bytes())?;
            let summary = json!({
                "command": "train",
                "data": dataset.data.display().to_string(),
                "aux": paths(&aux),
                "model": out.display().to_string(),
                "experiment": exp,
                "split_seed": split.seed,
                "loss_history": outcome.loss_history,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            Ok(())
        }
        Command::EvalDtw {
            dataset,
            features,
            dtw,
            templates,
            pool,
            trials,
            seed,
            random_forgeries,
            output,
        } => {
            let exp = DtwExperiment {
                features: features.config()?,
                dtw: dtw.config(),
                n_templates: templates,
                pool: pool.pool(),
                trials,
                seed,
                random_forgeries,
            };
            check_trials(trials)?;
            let data = open_dataset(&dataset.data, dataset.naming)?;
            let report = run_dtw_experiment(&data, &exp)?;
            emit(report, echo("eval-dtw", &dataset), &output)
        }
        Command::EvalRnn {
            dataset,
            aux,
            features,
            train,
            templates,
            pool,
            trials,
            seed,
            random_forgeries,
            model,
            output,
        } => {
            let exp = RnnExperiment {
                features: features.config()?,
                train: train.config(seed)?,
                n_templates: templates,
                pool: pool.pool(),
                trials,
                seed,
                random_forgeries,
            };
            check_trials(trials)?;
            let data = open_dataset(&dataset.data, dataset.naming)?;
            let mut echo = echo("eval-rnn", &dataset);
            echo["aux"] = json!(paths(&aux));
            let report = match &model {
                Some(path) => {
                    if !aux.is_empty() {
                        log::warn!("--aux is ignored when evaluating a trained --model");
                    }
                    if trials > 1 {
                        log::warn!("trials after the first may test on the model's training samples");
                    }
                    echo["model"] = json!(path.display().to_string());
                    evaluate_rnn_model(&data, &read_model(path, &exp.features)?, &exp)?
                }
                None => run_rnn_experiment(&data, &open_datasets(&aux)?, &exp)?,
            };
            emit(report, echo, &output)
        }
        Command::Verify {
            probe,
            templates,
            features,
            dtw,
            model,
            threshold,
        } => {
            let features = features.config()?;
            if templates.len() < 2 {
                return Err(Failure::Usage(
                    "verification needs at least two --template files".into(),
                ));
            }
            let probe = read_signature(&probe)?;
            let templates = templates
                .iter()
                .map(|p| read_signature(p))
                .collect::<Result<Vec<_>, _>>()?;
            let model = model.map(|p| read_model(&p, &features)).transpose()?;
            let backend = match &model {
                Some(m) => Backend::Rnn(m),
                None => Backend::Dtw(dtw.config()),
            };
            let score = score_probe(&probe, &templates, backend, &features)?;
            let decision = if score.score < threshold { "ACCEPT" } else { "REJECT" };
            println!("{decision} score={}", score.score);
            Ok(())
        }
    }
}

fn check_trials(trials: usize) -> Result<(), Failure> {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be positive".into()));
    }
    Ok(())
}

fn echo(command: &str, dataset: &DatasetArgs) -> serde_json::Value {
    json!({
        "command": command,
        "data": dataset.data.display().to_string(),
        "naming": format!("{:?}", dataset.naming).to_lowercase(),
    })
}

fn read_model(path: &Path, features: &FeatureConfig) -> Result<GruModel, Failure> {
    let file = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    GruModel::read_from(std::io::BufReader::new(file), Some(features.dim())).map_err(|e| match e {
        sigverify::Error::DimensionMismatch { .. } => {
            Failure::Usage(format!("{}: model does not fit the feature flags: {e}", path.display()))
        }
        e => io_failure(path, e),
    })
}

fn signature_files(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = fs::read_dir(input).map_err(|e| io_failure(input, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_failure(input, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("txt" | "csv")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Failure::Runtime(format!(
            "{}: no .txt or .csv signature files",
            input.display()
        )));
    }
    Ok(files)
}

fn cmd_extract(input: &Path, out: &Path, config: &FeatureConfig, raw: bool) -> Result<(), Failure> {
    let files = signature_files(input)?;
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    for path in files {
        let sig = read_signature(&path)?;
        let seq = if raw {
            extract(&sig, config)
        } else {
            featurize(&sig, config)
        }
        .map_err(|e| io_failure(&path, e))?;
        let stem = path.file_stem().expect("files have names").to_string_lossy();
        let target = out.join(format!("{stem}.lnps"));
        write_file(&target, &seq.to_bytes())?;
        println!("{}\t{} x {}", target.display(), seq.len(), seq.dim());
    }
    Ok(())
}
