use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mvver::{
    classifier, dataset, entropy, harness, refine, ClassifierConfig, ClassifierKind,
    ExperimentConfig, Model, NoiseSpec, RefineConfig, StrongLabel,
};

#[derive(Parser)]
#[command(name = "mvver", about = "Noisy-label dataset curation by multi-view voting and entropy ranking", version)]
struct Cli {
    /// Seed override for the chosen subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory that relative output paths are resolved under.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// JSON config file (used by `experiment`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Softmax,
    Mlp,
}

impl From<KindArg> for ClassifierKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Softmax => ClassifierKind::Softmax,
            KindArg::Mlp => ClassifierKind::Mlp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrongLabelArg {
    Voted,
    Original,
}

impl From<StrongLabelArg> for StrongLabel {
    fn from(s: StrongLabelArg) -> Self {
        match s {
            StrongLabelArg::Voted => StrongLabel::Voted,
            StrongLabelArg::Original => StrongLabel::Original,
        }
    }
}

#[derive(Args)]
struct ClassifierArgs {
    #[arg(long, value_enum, default_value = "softmax")]
    kind: KindArg,
    #[arg(long, default_value_t = 64)]
    hidden_units: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
}

impl ClassifierArgs {
    fn to_config(&self, seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            kind: self.kind.into(),
            hidden_units: self.hidden_units,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            l2: self.l2,
            seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-blob dataset as CSV.
    GenBlobs {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        gen_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inject class-balanced label noise, writing the corrupted dataset
    /// and the flip ledger.
    Inject {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Run the iterative refinement and write the curated dataset.
    Curate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        #[arg(long, default_value_t = 2)]
        views: usize,
        #[arg(long, value_enum, default_value = "voted")]
        strong_label: StrongLabelArg,
        #[arg(long, default_value_t = 0)]
        run_seed: u64,
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of final weak-set ids and features.
        #[arg(long)]
        weak_out: Option<PathBuf>,
        /// Optional JSON per-iteration reports.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train a classifier on a CSV dataset and save the model as JSON.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        train_seed: u64,
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on a labeled CSV test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run the full noise-ratio sweep experiment from a JSON config.
    Experiment {
        /// Output report path (JSON); a CSV table is written alongside.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Entropy histogram of a model's predictions over a CSV of samples.
    EntropyHist {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(out_dir: &Option<PathBuf>, path: &Path) -> PathBuf {
    match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn run(cli: Cli) -> mvver::Result<()> {
    let seed_override = cli.seed;
    let out_dir = &cli.out_dir;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    match cli.command {
        Command::GenBlobs {
            classes,
            per_class,
            dim,
            separation,
            spread,
            gen_seed,
            out,
        } => {
            let seed = seed_override.unwrap_or(gen_seed);
            let (ds, _) = dataset::make_blobs(classes, per_class, dim, separation, spread, seed)?;
            dataset::save_csv(&ds, &resolve(out_dir, &out))?;
            println!("wrote {} samples ({} classes, dim {})", ds.len(), classes, dim);
        }
        Command::Inject {
            input,
            ratio,
            noise_seed,
            out,
            ledger,
        } => {
            let ds = dataset::load_csv(&input)?;
            let seed = seed_override.unwrap_or(noise_seed);
            let (noisy, led) = dataset::inject_noise(&ds, &NoiseSpec { ratio, seed })?;
            dataset::save_csv(&noisy, &resolve(out_dir, &out))?;
            if let Some(path) = ledger {
                led.save_json(&resolve(out_dir, &path))?;
            }
            println!("flipped {} of {} labels", led.len(), ds.len());
        }
        Command::Curate {
            input,
            alpha,
            iterations,
            views,
            strong_label,
            run_seed,
            classifier,
            out,
            weak_out,
            report,
        } => {
            let ds = dataset::load_csv(&input)?;
            let seed = seed_override.unwrap_or(run_seed);
            let clf = classifier.to_config(seed);
            let cfg = RefineConfig {
                iterations,
                views,
                alpha,
                strong_label: strong_label.into(),
                view_classifier: clf.clone(),
                strong_classifier: clf.clone(),
                final_classifier: clf,
                seed,
            };
            let outcome = refine::run_refinement(&ds, &cfg, None)?;
            dataset::save_csv(&outcome.curated, &resolve(out_dir, &out))?;
            if let Some(path) = weak_out {
                let mut text = String::from("id");
                for j in 0..ds.dim {
                    text.push_str(&format!(",f{j}"));
                }
                text.push('\n');
                for w in &outcome.weak {
                    text.push_str(&w.id.to_string());
                    for v in &w.features {
                        text.push_str(&format!(",{v}"));
                    }
                    text.push('\n');
                }
                fs::write(resolve(out_dir, &path), text)?;
            }
            if let Some(path) = report {
                fs::write(
                    resolve(out_dir, &path),
                    serde_json::to_vec_pretty(&outcome.reports)?,
                )?;
            }
            println!(
                "curated {} samples, {} left weak",
                outcome.curated.len(),
                outcome.weak.len()
            );
        }
        Command::Train {
            input,
            train_seed,
            classifier,
            out,
        } => {
            let ds = dataset::load_csv(&input)?;
            let seed = seed_override.unwrap_or(train_seed);
            let model = classifier::fit(&ds, &classifier.to_config(seed))?;
            model.save_json(&resolve(out_dir, &out))?;
            println!(
                "trained on {} samples, final epoch loss {:.6}",
                ds.len(),
                model.epoch_loss.last().unwrap()
            );
        }
        Command::Eval { model, test } => {
            let model = Model::load_json(&model)?;
            let test = dataset::load_csv(&test)?;
            let acc = harness::evaluate(&model, &test)?;
            println!("{acc:.6}");
        }
        Command::Experiment { out } => {
            let config_path = cli.config.ok_or_else(|| {
                mvver::Error::InvalidConfig("experiment requires --config <json>".into())
            })?;
            let mut cfg = ExperimentConfig::load_json(&config_path)?;
            if let Some(seed) = seed_override {
                cfg.seed = seed;
            }
            let report = harness::run_experiment(&cfg)?;
            let json_path = resolve(out_dir, &out);
            report.save_json(&json_path)?;
            let csv_path = json_path.with_extension("csv");
            report.save_csv_table(&csv_path)?;
            println!("wrote {} and {}", json_path.display(), csv_path.display());
        }
        Command::EntropyHist {
            model,
            input,
            bins,
            out,
        } => {
            let model = Model::load_json(&model)?;
            let ds = dataset::load_csv(&input)?;
            let weak: Vec<mvver::WeakSample> = ds
                .samples
                .iter()
                .map(|s| mvver::WeakSample {
                    id: s.id,
                    features: s.features.clone(),
                    audit_label: s.label,
                })
                .collect();
            let records = entropy::rank_weak(&model, &weak)?;
            let hist = entropy::entropy_histogram(&records, bins, model.num_classes);
            let bytes = serde_json::to_vec_pretty(&hist)?;
            match out {
                Some(path) => fs::write(resolve(out_dir, &path), bytes)?,
                None => println!("{}", String::from_utf8_lossy(&bytes)),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = json!({ "error": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
