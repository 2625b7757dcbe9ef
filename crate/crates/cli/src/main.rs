use std::io;
use std::process::ExitCode;

use clap::Parser;
use drl_cli::{run, Cli, LOG_LEVELS, LOG_LEVEL_VAR};

fn init_logging() -> Result<(), String> {
    let level = match std::env::var(LOG_LEVEL_VAR) {
        Ok(v) if LOG_LEVELS.contains(&v.as_str()) => v,
        Ok(v) => return Err(format!("{LOG_LEVEL_VAR} must be one of {}, got `{v}`", LOG_LEVELS.join("|"))),
        Err(_) => "warn".to_string(),
    };
    env_logger::Builder::new().parse_filters(&level).init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = init_logging() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(&cli, &mut io::stdout().lock(), &mut io::stderr().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
