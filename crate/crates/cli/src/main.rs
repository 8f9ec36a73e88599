use std::process::ExitCode;

use twostep_cli::{execute, parse_config, render, Command};

fn main() -> ExitCode {
    let cfg = match parse_config(std::env::args_os(), None) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    eprint!("effective config:\n{}", cfg.echo());
    let result = execute(&cfg).and_then(|outcome| {
        if let twostep_cli::Outcome::Estimates { warnings, .. } = &outcome {
            for w in warnings {
                eprintln!("warning: {w}");
            }
        }
        let text = render(&outcome, cfg.format);
        match (&cfg.output, cfg.command) {
            (Some(path), c) if c != Command::Generate => std::fs::write(path, text)?,
            _ => print!("{text}"),
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
