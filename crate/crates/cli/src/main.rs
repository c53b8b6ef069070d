//! `predecomp` command line: train boosted trees, export attributions,
//! compute global feature attributions, verify the total-gain identity, and
//! run replicated sweep experiments.
//!
//! Exit codes: 0 success, 1 verification out of tolerance, 2 bad flags or
//! configuration, 3 I/O failure, 4 data validation failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use predecomp::attribution::{
    self, identity_max_diff, local_accuracy_max_residual, per_tree_contribution_sums, IfaKind,
};
use predecomp::datagen::{self, Task};
use predecomp::error::Error;
use predecomp::experiment::{
    emit_report, emit_series, run_experiment, ExperimentConfig, ReportFormat,
};
use predecomp::gbt::Loss;
use predecomp::gfa::{self, Domain, Family};
use predecomp::metrics::risk;
use predecomp::{Dataset, GBTModel, TrainConfig};

#[derive(Parser)]
#[command(name = "predecomp", version, about = "Gradient boosted trees with regularization-aware feature attributions")]
struct Cli {
    /// Worker threads for replicated experiments (default: all logical
    /// processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV dataset and write the model JSON.
    Train(TrainArgs),
    /// Check the total-gain identity, local accuracy, and the lambda=0
    /// zero-sum property of a model against its training data.
    Verify(VerifyArgs),
    /// Compute a global feature attribution and write it as CSV.
    Gfa(GfaArgs),
    /// Export per-tree attribution contributions for a dataset.
    Attribute(AttributeArgs),
    /// Run a replicated sweep experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Generate the simulated benchmark as CSV plus a truth sidecar.
    Datagen(DatagenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum FamilyArg {
    TreeInner,
    ForestInner,
    Abs,
    Permutation,
}

#[derive(Clone, Copy, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum IfaArg {
    Predecomp,
    SaabasTilde,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Train,
    Valid,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Domain {
        match d {
            DomainArg::Train => Domain::Train,
            DomainArg::Valid => Domain::Valid,
        }
    }
}

/// Table-style training flags shared by subcommands that fit models.
#[derive(Args)]
struct HyperArgs {
    /// Learning rate.
    #[arg(long = "eta", default_value_t = 1e-2)]
    eta: f64,
    /// Maximum tree depth.
    #[arg(long = "max_depth", default_value_t = 4)]
    max_depth: usize,
    /// Minimum hessian sum per child.
    #[arg(long = "min_child_weight", default_value_t = 1.0)]
    min_child_weight: f64,
    /// Number of boosting rounds.
    #[arg(long = "num_boost_round", default_value_t = 400)]
    num_boost_round: usize,
    /// L2 leaf regularization.
    #[arg(long = "reg_lambda", default_value_t = 1.0)]
    reg_lambda: f64,
}

impl HyperArgs {
    fn to_config(&self, loss: Loss, seed: u64) -> TrainConfig {
        TrainConfig {
            eta: self.eta,
            reg_lambda: self.reg_lambda,
            max_depth: self.max_depth,
            min_child_weight: self.min_child_weight,
            num_boost_round: self.num_boost_round,
            loss,
            seed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV (header row, one label column, numeric features).
    #[arg(long)]
    data: PathBuf,
    /// Name of the label column.
    #[arg(long = "label-column", default_value = "y")]
    label_column: String,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the model JSON.
    #[arg(long = "model-out")]
    model_out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// The exact training dataset the model was fit on.
    #[arg(long = "train-data")]
    train_data: PathBuf,
    #[arg(long = "label-column", default_value = "y")]
    label_column: String,
}

#[derive(Args)]
struct GfaArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "label-column", default_value = "y")]
    label_column: String,
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// IFA driving the family; ignored (and implied none) for permutation.
    #[arg(long, value_enum, default_value = "predecomp")]
    ifa: IfaArg,
    /// Domain tag recorded in the output; metadata only.
    #[arg(long = "domain-tag", value_enum, default_value = "valid")]
    domain_tag: DomainArg,
    /// Permutation repeats (permutation family only).
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON mirror.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct AttributeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "label-column", default_value = "y")]
    label_column: String,
    /// Which node values drive the decomposition.
    #[arg(long, value_enum, default_value = "predecomp")]
    ifa: IfaArg,
    /// Directory for contributions.csv, bias.json, forest.csv.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.csv, report.json, and the series files.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long = "n-train", default_value_t = 1000)]
    n_train: usize,
    #[arg(long = "n-valid", default_value_t = 1000)]
    n_valid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for train.csv, valid.csv, truth.json.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Csv { .. } | Error::Json(_) => 3,
        Error::InvalidInput(_) | Error::Shape(_) | Error::UndefinedAuc => 4,
        Error::Replication { source, .. } => exit_code_for(source),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Train(args) => train(args),
        Command::Verify(args) => verify(args),
        Command::Gfa(args) => gfa_cmd(args),
        Command::Attribute(args) => attribute(args),
        Command::Experiment(args) => experiment(args),
        Command::Datagen(args) => datagen_cmd(args),
    }
}

fn train(args: TrainArgs) -> Result<ExitCode, Error> {
    let task: Task = args.task.into();
    let data = Dataset::read_csv(&args.data, &args.label_column)?;
    let config = args.hyper.to_config(task.loss(), args.seed);
    let model = GBTModel::fit(&data, config)?;
    model.save_json(&args.model_out)?;
    let train_risk = risk(&model, &data)?;
    println!("trees: {}", model.num_trees());
    println!("train risk: {train_risk}");
    println!("model written to {}", args.model_out.display());
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode, Error> {
    let model = GBTModel::load_json(&args.model)?;
    let data = Dataset::read_csv(&args.train_data, &args.label_column)?;

    const IDENTITY_TOL: f64 = 1e-8;
    const LOCAL_ACCURACY_TOL: f64 = 1e-9;

    let identity = identity_max_diff(&model, &data)?;
    let local_hat = local_accuracy_max_residual(&model, data.features(), IfaKind::Predecomp)?;
    let local_tilde =
        local_accuracy_max_residual(&model, data.features(), IfaKind::SaabasTilde)?;

    let mut pass = identity <= IDENTITY_TOL
        && local_hat <= LOCAL_ACCURACY_TOL
        && local_tilde <= LOCAL_ACCURACY_TOL;
    println!("identity max |l1(total_gain) - l1(via_inner)|: {identity:e} (tolerance {IDENTITY_TOL:e})");
    println!("local accuracy max residual (hat): {local_hat:e} (tolerance {LOCAL_ACCURACY_TOL:e})");
    println!("local accuracy max residual (tilde): {local_tilde:e} (tolerance {LOCAL_ACCURACY_TOL:e})");

    if model.config.reg_lambda == 0.0 {
        let bound = 1e-8 * data.n_rows() as f64;
        let sums = per_tree_contribution_sums(&model, data.features())?;
        let worst = sums.data().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        println!("zero-sum max per-tree |sum_i f_mk(x_i)|: {worst:e} (tolerance {bound:e})");
        pass = pass && worst <= bound;
    }

    if pass {
        println!("verification: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verification: FAIL");
        Ok(ExitCode::from(1))
    }
}

fn gfa_cmd(args: GfaArgs) -> Result<ExitCode, Error> {
    let model = GBTModel::load_json(&args.model)?;
    let data = Dataset::read_csv(&args.data, &args.label_column)?;
    let domain: Domain = args.domain_tag.into();
    let ifa = match args.ifa {
        IfaArg::Predecomp => Some(IfaKind::Predecomp),
        IfaArg::SaabasTilde => Some(IfaKind::SaabasTilde),
        IfaArg::None => None,
    };
    let result = match args.family {
        FamilyArg::Permutation => {
            gfa::permutation_importance(&model, &data, domain, args.repeats, args.seed)?
        }
        family => {
            let ifa = ifa.ok_or_else(|| {
                Error::Config("this family requires --ifa predecomp or saabas_tilde".into())
            })?;
            match family {
                FamilyArg::TreeInner => gfa::tree_inner(&model, ifa, &data, domain)?,
                FamilyArg::ForestInner => gfa::forest_inner(&model, ifa, &data, domain)?,
                FamilyArg::Abs => gfa::abs_gfa(&model, ifa, &data, domain)?,
                FamilyArg::Permutation => unreachable!(),
            }
        }
    };
    let names: Vec<String> = (0..model.n_features).map(|k| model.feature_name(k)).collect();
    result.write_csv(&names, &args.out)?;
    if let Some(json) = &args.json {
        result.write_json(&names, json)?;
    }
    println!(
        "{} scores written to {}",
        family_label(args.family),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn family_label(f: FamilyArg) -> &'static str {
    match f {
        FamilyArg::TreeInner => Family::TreeInner.label(),
        FamilyArg::ForestInner => Family::ForestInner.label(),
        FamilyArg::Abs => Family::Abs.label(),
        FamilyArg::Permutation => Family::Permutation.label(),
    }
}

fn attribute(args: AttributeArgs) -> Result<ExitCode, Error> {
    let model = GBTModel::load_json(&args.model)?;
    let data = Dataset::read_csv(&args.data, &args.label_column)?;
    let kind = match args.ifa {
        IfaArg::Predecomp => IfaKind::Predecomp,
        IfaArg::SaabasTilde => IfaKind::SaabasTilde,
        IfaArg::None => {
            return Err(Error::Config(
                "--ifa must be predecomp or saabas_tilde".into(),
            ))
        }
    };
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let csv = args.out_dir.join("contributions.csv");
    let bias = args.out_dir.join("bias.json");
    let forest = args.out_dir.join("forest.csv");
    attribution::export_attribution_csv(
        &model,
        data.features(),
        kind,
        &csv,
        &bias,
        Some(forest.as_path()),
    )?;
    println!("attribution files written to {}", args.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn experiment(args: ExperimentArgs) -> Result<ExitCode, Error> {
    let config = ExperimentConfig::load_json(&args.config)?;
    let report = run_experiment(&config)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    emit_report(&report, ReportFormat::Csv, args.out_dir.join("report.csv"))?;
    emit_report(&report, ReportFormat::Json, args.out_dir.join("report.json"))?;
    emit_series(&report, &args.out_dir)?;
    for row in &report.rows {
        println!(
            "{} {}={} {}/{}/{}: auc {:.4} +- {:.4}, risk {:.4}, identity {:.2e}",
            row.dataset,
            row.sweep_name.label(),
            row.sweep_value,
            row.family.label(),
            row.domain.label(),
            row.ifa.label(),
            row.auc_mean,
            row.auc_std,
            row.risk_mean,
            row.identity_max_diff,
        );
    }
    println!("report files written to {}", args.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn datagen_cmd(args: DatagenArgs) -> Result<ExitCode, Error> {
    let task: Task = args.task.into();
    let (train, valid, truth) =
        datagen::gen_simulated::<f64>(args.n_train, args.n_valid, task, args.seed)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    train.write_csv(args.out_dir.join("train.csv"), "y")?;
    valid.write_csv(args.out_dir.join("valid.csv"), "y")?;
    truth.save_json(args.out_dir.join("truth.json"))?;
    println!(
        "wrote train.csv ({} rows), valid.csv ({} rows), truth.json to {}",
        train.n_rows(),
        valid.n_rows(),
        args.out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}
