mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Explain(a) => commands::explain(a).map(drop),
        Command::Eval(a) => commands::eval(a).map(drop),
        Command::MakeDemo(a) => commands::make_demo(a).map(drop),
        Command::Rerun(a) => commands::rerun(a).map(drop),
        Command::Masks(a) => commands::masks(a).map(drop),
        Command::Adapter(a) => commands::adapter(a),
        Command::Study(c) => commands::study(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIDU_LOG", "warn")).init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
