use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cutset::cnet::DEFAULT_LAMBDA;
use cutset::scores::{DEFAULT_ALPHA, DEFAULT_BETA};
use cutset::{LearnerConfig, ScoreConfig};
use cutset_cli::{
    cmd_bench, cmd_eval, cmd_learn, cmd_learn_mixture, cmd_mpe, cmd_sample, BenchMethod, CliError, CliResult,
    DEFAULT_SEED,
};

#[derive(Parser)]
#[command(name = "cutset", version, about = "Learn cutset networks from binary CSV data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Score {
    Bd,
    Bic,
}

#[derive(clap::Args)]
struct ScoreArgs {
    #[arg(long, value_enum, default_value = "bd")]
    score: Score,
    /// Equivalent sample size of the Dirichlet priors.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Laplace smoothing of BIC parameters.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Candidate variables scored per leaf.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: usize,
}

impl ScoreArgs {
    fn config(&self) -> LearnerConfig {
        let mut score = match self.score {
            Score::Bd => ScoreConfig::bd(self.alpha),
            Score::Bic => ScoreConfig::bic(self.beta),
        };
        score.alpha = self.alpha;
        score.beta = self.beta;
        LearnerConfig { score, lambda: self.lambda }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a single network on a training file.
    Learn {
        train: PathBuf,
        #[command(flatten)]
        score: ScoreArgs,
        #[arg(short, long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Learn mixtures for several K and keep the best on validation data.
    LearnMixture {
        train: PathBuf,
        valid: PathBuf,
        /// Comma-separated component counts.
        #[arg(short = 'k', long = "k", value_delimiter = ',', default_value = "2,3,5,8,10,20")]
        ks: Vec<usize>,
        #[command(flatten)]
        score: ScoreArgs,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(short, long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Mean and total log-likelihood of a dataset, in nats.
    Eval {
        model: PathBuf,
        data: PathBuf,
        /// Also evaluate on the compiled circuit and cross-check each row.
        #[arg(long)]
        via_circuit: bool,
    },
    /// Draw samples as CSV rows.
    Sample {
        model: PathBuf,
        #[arg(short, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Complete rows whose `?` cells are unobserved.
    Mpe {
        model: PathBuf,
        evidence: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Benchmark both learners on every dataset triplet in a directory.
    Bench {
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "bd,bic")]
        methods: Vec<Score>,
        /// Write `NA` instead of wall times so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn print_opt(text: Option<String>) {
    if let Some(t) = text {
        print!("{t}");
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Learn { train, score, out } => {
            print!("{}", cmd_learn(&train, &score.config(), &out)?);
        }
        Command::LearnMixture {
            train,
            valid,
            ks,
            score,
            seed,
            out,
        } => {
            let (report, _) = cmd_learn_mixture(&train, &valid, &ks, &score.config(), seed, &out)?;
            print!("{report}");
        }
        Command::Eval { model, data, via_circuit } => {
            print!("{}", cmd_eval(&model, &data, via_circuit)?);
        }
        Command::Sample { model, n, seed, out } => print_opt(cmd_sample(&model, n, seed, out.as_deref())?),
        Command::Mpe { model, evidence, out } => print_opt(cmd_mpe(&model, &evidence, out.as_deref())?),
        Command::Bench {
            dir,
            methods,
            no_timing,
            out,
        } => {
            let methods: Vec<BenchMethod> = methods
                .into_iter()
                .map(|m| match m {
                    Score::Bd => BenchMethod::Bd,
                    Score::Bic => BenchMethod::Bic,
                })
                .collect();
            print_opt(cmd_bench(&dir, &methods, !no_timing, out.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
