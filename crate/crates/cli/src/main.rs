use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use countlab::datagen::GestureConvention;
use countlab::training::{Execution, Pretraining};
use countlab::FeedbackMode;
use countlab_cli::config::OUTPUT_DIR_ENV;
use countlab_cli::{
    cmd_build_gestures, cmd_compare, cmd_report, cmd_run, CliResult, ExperimentConfig, Metric,
};

#[derive(Parser)]
#[command(
    name = "countlab",
    version,
    about = "Train and evaluate counting/pointing recurrent networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the arm pointing postures and write the PCA gesture table.
    BuildGestures {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the config's `gesture_table` path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate all repetitions of one configuration.
    Run(RunArgs),
    /// One-way ANOVA between result sets (run directories or results.tsv files).
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "counting")]
        metric: MetricArg,
        /// Defaults to `compare-<metric>.tsv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
    },
    /// Consolidate every run under a directory into report/table.tsv and loss curves.
    Report {
        #[arg(env = OUTPUT_DIR_ENV)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Counting,
    Gesture,
    Stage1bGesture,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    StayAtLast,
    GoToBase,
}

#[derive(Clone, Copy, ValueEnum)]
enum PretrainingArg {
    None,
    Stage1a,
    Stage1b,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackArg {
    FreeRunning,
    TeacherForced,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    study: Option<u8>,
    #[arg(long)]
    condition: Option<u8>,
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    /// Study 2: feed gesture outputs back as inputs.
    #[arg(long)]
    jordan_loop: Option<bool>,
    #[arg(long, value_enum)]
    pretraining: Option<PretrainingArg>,
    #[arg(long, value_enum)]
    feedback_mode: Option<FeedbackArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    test_sets: Option<usize>,
    #[arg(long)]
    sub_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    hidden_size: Option<usize>,
    /// Scale repetitions, sub-epochs, test sets and pre-training epochs.
    #[arg(long)]
    desk_scale: Option<f64>,
    #[arg(long)]
    gesture_table: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    no_checkpoints: bool,
    /// Run repetitions one after another instead of in parallel.
    #[arg(long)]
    serial: bool,
}

fn base_config(path: Option<&Path>) -> CliResult<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn env_output_dir(cfg: &mut ExperimentConfig) {
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
}

fn resolve_run(a: &RunArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = base_config(a.config.as_deref())?;
    env_output_dir(&mut cfg);
    macro_rules! set {
        ($($field:ident <- $value:expr),* $(,)?) => {
            $(if let Some(v) = $value { cfg.$field = v; })*
        };
    }
    set! {
        study <- a.study,
        condition <- a.condition,
        jordan_loop <- a.jordan_loop,
        base_seed <- a.seed,
        repetitions <- a.repetitions,
        test_sets <- a.test_sets,
        sub_epochs <- a.sub_epochs,
        hidden_size <- a.hidden_size,
        desk_scale <- a.desk_scale,
        gesture_table <- a.gesture_table.clone(),
        output_dir <- a.output_dir.clone(),
        convention <- a.convention.map(|c| match c {
            ConventionArg::StayAtLast => GestureConvention::StayAtLast,
            ConventionArg::GoToBase => GestureConvention::GoToBase,
        }),
        pretraining <- a.pretraining.map(|p| match p {
            PretrainingArg::None => Pretraining::None,
            PretrainingArg::Stage1a => Pretraining::Stage1a,
            PretrainingArg::Stage1b => Pretraining::Stage1b,
            PretrainingArg::Both => Pretraining::Both,
        }),
        feedback_mode <- a.feedback_mode.map(|m| match m {
            FeedbackArg::FreeRunning => FeedbackMode::FreeRunning,
            FeedbackArg::TeacherForced => FeedbackMode::TeacherForced,
        }),
    }
    if a.learning_rate.is_some() {
        cfg.learning_rate = a.learning_rate;
    }
    if a.no_checkpoints {
        cfg.checkpoints = false;
    }
    Ok(cfg)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{:.1}", 100.0 * x))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::BuildGestures { config, out } => {
            let cfg = base_config(config.as_deref())?;
            let out = out.unwrap_or_else(|| cfg.gesture_table.clone());
            let table = cmd_build_gestures(&cfg, &out)?;
            println!(
                "wrote {} ({} postures, 3 components, variance fraction {:.4})",
                out.display(),
                table.len(),
                table.variance_fraction
            );
        }
        Command::Run(args) => {
            let cfg = resolve_run(&args)?;
            let execution = if args.serial {
                Execution::Serial
            } else {
                Execution::Parallel
            };
            let run = cmd_run(&cfg, execution)?;
            let r = &run.report;
            for row in &r.rows {
                println!(
                    "rep {:>2} seed {:>6}  counting {:>5}  gesture {:>5}",
                    row.index,
                    row.seed,
                    pct(row.counting),
                    pct(row.gesture)
                );
            }
            println!(
                "{}: counting {}  gesture {}  -> {}",
                cfg.label(),
                countlab_cli::output::mean_sd_cell(r.counting.as_ref()),
                countlab_cli::output::mean_sd_cell(r.gesture.as_ref()),
                run.dir.display()
            );
            eprintln!(
                "trained {} repetitions in {:.1}s",
                r.rows.len(),
                run.wall_seconds
            );
        }
        Command::Compare {
            runs,
            metric,
            out,
            output_dir,
        } => {
            let metric = match metric {
                MetricArg::Counting => Metric::Counting,
                MetricArg::Gesture => Metric::Gesture,
                MetricArg::Stage1bGesture => Metric::Stage1bGesture,
            };
            let out = out.unwrap_or_else(|| {
                output_dir
                    .unwrap_or_else(|| ExperimentConfig::default().output_dir)
                    .join(format!("compare-{}.tsv", metric.name()))
            });
            for c in cmd_compare(&runs, metric, &out)? {
                println!(
                    "{} vs {}: F({}, {}) = {:.4}, p = {:.3e}",
                    c.a, c.b, c.result.df_between, c.result.df_within, c.result.f, c.result.p
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Report { dir } => {
            let r = cmd_report(&dir)?;
            println!(
                "wrote {} ({} runs) and {} loss curves",
                r.table.display(),
                r.rows,
                r.curves.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
