use std::process::ExitCode;

use gmlf_cli::CliError;

fn main() -> ExitCode {
    match gmlf_cli::run(std::env::args_os()) {
        Ok(outcome) => {
            if !outcome.message.is_empty() {
                println!("{}", outcome.message.trim_end());
            }
            println!("manifest: {}", outcome.manifest_path.display());
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
