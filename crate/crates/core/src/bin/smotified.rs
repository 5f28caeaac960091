use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use smotified::dataset::{load_manifest, partition_by_class};
use smotified::harness::{oversample_arm, prepare_split, report_from_dir, run_experiment, summary_text, ExperimentConfig};
use smotified::smotified_gan::Method;
use smotified::{Error, Result};

#[derive(Parser)]
#[command(name = "smotified", version, about = "SMOTE / GAN / SMOTified-GAN oversampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm for R seeded repetitions and write the reports.
    Run {
        /// JSON experiment config; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset manifest (JSON array of sources).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Comma-separated dataset names.
        #[arg(long, value_delimiter = ',')]
        datasets: Option<Vec<String>>,
        /// Comma-separated arms: none, smote, gan, smotified_gan.
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<String>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// GAN epoch cap.
        #[arg(long)]
        gan_epochs: Option<usize>,
        /// Classifier epoch cap.
        #[arg(long)]
        classifier_epochs: Option<usize>,
        /// Draw a new train/validation/test split for every run.
        #[arg(long)]
        resplit: bool,
    },
    /// Oversample one dataset's training split and write the synthetic rows.
    Oversample {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "smotified_gan")]
        arm: String,
        /// Run index whose seeds are used.
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        gan_epochs: Option<usize>,
        /// Output CSV (scaled feature space, one row per synthetic sample).
        #[arg(long)]
        out: PathBuf,
        /// Also write SMOTE rows next to their generator outputs.
        #[arg(long)]
        side_by_side: Option<PathBuf>,
    },
    /// Rebuild summaries and the index from raw run files.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resplit: bool,
    },
}

fn base_config(config: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_json_file(&p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = manifest {
        cfg.manifest = m;
    }
    Ok(cfg)
}

fn parse_arms(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|s| s.parse()).collect()
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            manifest,
            datasets,
            arms,
            reps,
            seed,
            out,
            jobs,
            gan_epochs,
            classifier_epochs,
            resplit,
        } => {
            let mut cfg = base_config(config, manifest)?;
            if let Some(d) = datasets {
                cfg.datasets = d;
            }
            if let Some(a) = arms {
                cfg.arms = parse_arms(&a)?;
            }
            if let Some(r) = reps {
                cfg.repetitions = r;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if let Some(e) = gan_epochs {
                cfg.gan.max_epochs = e;
            }
            if let Some(e) = classifier_epochs {
                cfg.classifier.max_epochs = e;
            }
            cfg.resplit |= resplit;
            let outcome = run_experiment(&cfg)?;
            for s in &outcome.summaries {
                println!("{}", summary_text(s));
            }
            let failed = outcome.failed_runs();
            if failed > 0 {
                eprintln!("{failed} arm run(s) failed and were excluded; see the raw run files");
            }
            println!("reports written to {}", cfg.out_dir.display());
            Ok(failed == 0)
        }
        Command::Oversample {
            config,
            manifest,
            dataset,
            arm,
            run,
            seed,
            gan_epochs,
            out,
            side_by_side,
        } => {
            let mut cfg = base_config(config, manifest)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(e) = gan_epochs {
                cfg.gan.max_epochs = e;
            }
            let arm: Method = arm.parse()?;
            let source = load_manifest(&cfg.manifest)?
                .into_iter()
                .find(|s| s.name.eq_ignore_ascii_case(&dataset))
                .ok_or_else(|| Error::Config(format!("dataset {dataset:?} not in manifest")))?;
            let ds = source.load()?;
            let split = smotified::dataset::SplitSpec {
                seed: cfg.split_seed(&ds.name, run),
                ..cfg.split
            };
            let data = prepare_split(&ds, &split)?;
            let (minority, majority) = partition_by_class(&data.train)?;
            let result = oversample_arm(&cfg, &data, arm, &cfg.run_seeds(run))?;
            let synthetic = smotified::dataset::Dataset::with_feature_names(
                format!("{}-{arm}", ds.name),
                ds.feature_names.clone(),
                result.synthetic.clone(),
                vec![1; result.synthetic.rows()],
            )?;
            synthetic.write_csv(&out)?;
            if let Some(p) = side_by_side {
                result.write_side_by_side(&p)?;
            }
            println!(
                "{}: {} minority + {} synthetic = {} majority rows; wrote {}",
                ds.name,
                minority.len(),
                result.synthetic.rows(),
                majority.len(),
                out.display()
            );
            Ok(true)
        }
        Command::Report { out, resplit } => {
            let outcome = report_from_dir(&out, resplit)?;
            for s in &outcome.summaries {
                println!("{}", summary_text(s));
            }
            Ok(outcome.failed_runs() == 0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
