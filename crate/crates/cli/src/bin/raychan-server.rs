use std::process::ExitCode;

use clap::Parser;

/// Ray-tracing channel server. Serves one client at a time until a
/// shutdown request arrives.
#[derive(Parser)]
#[command(name = "raychan-server", version)]
struct Args {
    /// Address to bind, host:port. Port 0 picks a free port.
    #[arg(long)]
    listen: String,
    /// Worker threads for batch computation (default: one per core).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match raychan_cli::cmd_server(&args.listen, args.workers) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
