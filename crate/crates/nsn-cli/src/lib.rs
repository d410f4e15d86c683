pub mod cli;
pub mod commands;
pub mod config;
pub mod grid;
pub mod manifest;

use clap::Parser;

use cli::{Cli, Command};
use commands::UsageError;
use config::FileConfig;

/// Parse arguments and dispatch. Returns the process exit code:
/// 0 on success, 2 for usage errors, 1 for runtime failures.
pub fn run() -> i32 {
    // Training progress records (one line per EM iteration) come from the
    // library at info level; show them by default.
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn,nsn=info"))
        .init();
    // clap itself exits with code 2 on malformed arguments.
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.chain().any(|e| e.is::<UsageError>()) {
                2
            } else {
                1
            }
        }
    }
}

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok(); // a pool may already exist in-process; that is fine
    }
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Train(args) => commands::cmd_train(args, &file),
        Command::Generate(args) => commands::cmd_generate(args, &file),
        Command::Style(args) => commands::cmd_style(args, &file),
        Command::Inpaint(args) => commands::cmd_inpaint(args, &file),
        Command::Interpolate(args) => commands::cmd_interpolate(args, &file),
        Command::Arith(args) => commands::cmd_arith(args, &file),
        Command::SampleLayer(args) => commands::cmd_sample_layer(args, &file),
        Command::Inspect(args) => commands::cmd_inspect(args, &file),
    }
}
