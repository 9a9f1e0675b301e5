use std::process::ExitCode;

use clap::Parser;
use rebuild_core::planner::Lineage;
use rebuild_service::cli::{self, Cli, Command};
use rebuild_service::http::{self, AppState};
use rebuild_service::ServiceError;

fn main() -> ExitCode {
    // usage errors are validation errors; exit 2 is reserved for "no plan"
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Serve { port, host } => serve(&cli, (*host, *port).into()).map(|()| None),
        _ => cli::run(&cli).map(Some),
    };
    match result {
        Ok(Some(out)) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.value).expect("json output"));
            } else {
                print!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&e.body()).expect("json output"));
            } else {
                eprintln!("error: {}", e.message);
                if let Some(details) = &e.details {
                    eprintln!("{details}");
                }
            }
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}

fn serve(cli: &Cli, addr: std::net::SocketAddr) -> Result<(), ServiceError> {
    let lineage = Lineage::open(&cli.data_dir)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| ServiceError::internal(e.to_string()))?;
    runtime
        .block_on(http::serve(AppState::new(lineage), addr))
        .map_err(|e| ServiceError::internal(e.to_string()))
}
