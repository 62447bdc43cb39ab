use std::process::ExitCode;

use clap::Parser;
use fklab::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let message = serde_json::json!({
                "error": e.kind(),
                "exit_code": e.exit_code(),
                "message": e.to_string(),
            });
            eprintln!("{message}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
