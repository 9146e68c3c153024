use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = io::stdout();
    match branchlab_cli::run(std::env::args_os(), &mut stdout.lock()) {
        Ok(()) => ExitCode::from(branchlab_cli::EXIT_OK as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
