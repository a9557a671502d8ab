use std::process::ExitCode;

fn main() -> ExitCode {
    gpim::cli::init_logging();
    match gpim::cli::run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
