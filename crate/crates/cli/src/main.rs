use bqstruct_cli::run::{run_gen, run_train, GenArgs, TrainArgs};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bqstruct", version, about = "distributed max-margin structured learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and optionally write metrics and weights
    Train(Box<TrainArgs>),
    /// Generate a synthetic tagging corpus
    Gen(GenArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("BQO_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train(args) => run_train(&args),
        Cmd::Gen(args) => run_gen(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
