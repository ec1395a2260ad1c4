use std::process::ExitCode;

use cexplain_service::{serve, Config};

#[tokio::main]
async fn main() -> ExitCode {
    let config = match Config::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cexplain-service: {e}");
            return ExitCode::from(2);
        }
    };
    eprintln!("listening on port {}", config.port);
    match serve(config).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cexplain-service: {e}");
            ExitCode::FAILURE
        }
    }
}
