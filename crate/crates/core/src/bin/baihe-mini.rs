use std::io::{self, IsTerminal};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use baihe::config::EngineConfig;
use baihe::engine::Engine;
use baihe::repl::{repl, run_script};

/// Interactive and scripted shell for the Baihe mini engine.
#[derive(Debug, Parser)]
#[command(name = "baihe-mini", version)]
struct Args {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data directory; overrides the config file and BAIHE_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Run the statements in this file instead of reading standard input.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Stop a script at its first failing statement.
    #[arg(long)]
    stop_on_error: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("BAIHE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    let args = Args::parse();

    let mut config = match &args.config {
        Some(p) => match EngineConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("baihe-mini: config {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => EngineConfig::default(),
    };
    let config_sets_dir = args
        .config
        .as_ref()
        .and_then(|p| std::fs::read_to_string(p).ok())
        .is_some_and(|t| t.lines().any(|l| l.trim_start().starts_with("data_dir")));
    if let Some(d) = args.data_dir {
        config.data_dir = d;
    } else if !config_sets_dir {
        if let Some(d) = std::env::var_os("BAIHE_DATA_DIR") {
            config.data_dir = d.into();
        }
    }

    let mut engine = match Engine::open(config) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("baihe-mini: cannot open data directory: {e}");
            return ExitCode::from(2);
        }
    };
    let mut session = engine.new_session();

    let code = match &args.script {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => {
                match run_script(
                    &mut engine,
                    &mut session,
                    &text,
                    args.stop_on_error,
                    &mut io::stdout(),
                    &mut io::stderr(),
                ) {
                    Ok(s) if s.errors == 0 => 0,
                    Ok(_) => 1,
                    Err(e) => {
                        eprintln!("baihe-mini: {e}");
                        1
                    }
                }
            }
            Err(e) => {
                eprintln!("baihe-mini: cannot read script {}: {e}", path.display());
                2
            }
        },
        None if io::stdin().is_terminal() => {
            let _ = repl(&mut engine, &mut session, &mut io::stdin().lock(), &mut io::stdout());
            0
        }
        None => {
            // Piped input behaves like a script.
            let mut text = String::new();
            match io::Read::read_to_string(&mut io::stdin(), &mut text) {
                Ok(_) => match run_script(
                    &mut engine,
                    &mut session,
                    &text,
                    args.stop_on_error,
                    &mut io::stdout(),
                    &mut io::stderr(),
                ) {
                    Ok(s) if s.errors == 0 => 0,
                    _ => 1,
                },
                Err(e) => {
                    eprintln!("baihe-mini: {e}");
                    1
                }
            }
        }
    };

    if let Err(e) = engine.close() {
        eprintln!("baihe-mini: saving tables failed: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
