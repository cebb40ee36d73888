use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use lexprobe::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("lexprobe: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli, &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lexprobe: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
