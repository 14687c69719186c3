use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raychan_cli::{bench_table, cmd_bench, cmd_run, cmd_server, cmd_validate, BenchmarkMatrix, CliError, Endpoint};

#[derive(Parser)]
#[command(
    name = "raychan",
    version,
    about = "Ray-traced channels for packet-level network simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ServerArgs {
    /// Channel server address, host:port.
    #[arg(long, env = "RAYCHAN_ENDPOINT", conflicts_with = "embedded")]
    endpoint: Option<String>,
    /// Run the channel server inside this process.
    #[arg(long)]
    embedded: bool,
    /// Worker threads for an embedded server.
    #[arg(long, requires = "embedded")]
    workers: Option<usize>,
}

impl ServerArgs {
    fn endpoint(&self) -> Option<Endpoint> {
        if self.embedded {
            Some(Endpoint::Embedded { workers: self.workers })
        } else {
            self.endpoint.clone().map(Endpoint::Remote)
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compare free-space channels against Friis path loss and d/c delay.
    Validate {
        /// Distances in metres.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 10.0, 100.0, 300.0, 1000.0])]
        distances: Vec<f64>,
        /// Carrier frequency in Hz.
        #[arg(long, default_value_t = 5e9)]
        frequency: f64,
        #[command(flatten)]
        server: ServerArgs,
    },
    /// Run a scenario and write packets.csv and summary.json.
    Run {
        /// Scenario JSON file.
        config: PathBuf,
        /// Output directory.
        #[arg(long, short, default_value = "out")]
        output: PathBuf,
        #[command(flatten)]
        server: ServerArgs,
    },
    /// Run the benchmark matrix and write bench.csv.
    Bench {
        /// Station counts.
        #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = [1usize, 2, 4, 8, 16])]
        sta_counts: Vec<usize>,
        /// Simulated seconds per cell.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Only these scenarios (hT_hM, lT_lM, hT_zM).
        #[arg(long, value_delimiter = ',')]
        scenarios: Vec<String>,
        /// Scene descriptor; free space when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory.
        #[arg(long, short, default_value = "out")]
        output: PathBuf,
        #[command(flatten)]
        server: ServerArgs,
    },
    /// Run a channel server.
    Server {
        /// Address to bind, host:port.
        #[arg(long, default_value = "127.0.0.1:5555")]
        listen: String,
        /// Worker threads (default: one per core).
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate {
            distances,
            frequency,
            server,
        } => {
            let endpoint = raychan_cli::resolve_endpoint(server.endpoint(), None)?;
            let mut service = endpoint.connect()?;
            let report = cmd_validate(&distances, frequency, service.as_mut())?;
            print!("{}", report.table());
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::Validation("free-space deviation above tolerance".into()))
            }
        }
        Command::Run { config, output, server } => {
            let m = cmd_run(&config, &output, server.endpoint())?;
            println!(
                "{} packets, delivery ratio {:.4}, hit rate {:.4}, {} requests, {:.3} s -> {}",
                m.packets.len(),
                m.delivery_ratio(),
                m.cache.hit_rate(),
                m.channel_requests,
                m.wall_clock_s,
                output.display()
            );
            Ok(())
        }
        Command::Bench {
            sta_counts,
            duration,
            scenarios,
            scene,
            seed,
            output,
            server,
        } => {
            let mut matrix = BenchmarkMatrix {
                sta_counts,
                duration,
                scene,
                seed,
                ..BenchmarkMatrix::default()
            };
            if !scenarios.is_empty() {
                matrix.select(&scenarios)?;
            }
            matrix.validate()?;
            let endpoint = raychan_cli::resolve_endpoint(server.endpoint(), None)?;
            let rows = cmd_bench(&matrix, &output, &endpoint)?;
            print!("{}", bench_table(&rows));
            Ok(())
        }
        Command::Server { listen, workers } => cmd_server(&listen, workers),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if matches!(cli.command, Command::Server { .. }) {
        "info"
    } else {
        "warn"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
