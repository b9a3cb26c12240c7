use clap::Parser;
use symvi_cli::{run, Cli, CliError, ExperimentConfig};

fn main() {
    let cli = Cli::parse();
    let result = (|| {
        let cfg = ExperimentConfig::from_cli(&cli)?;
        if let Some(n) = cli.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        run(&cfg)
    })();
    if let Err(e) = result {
        eprintln!("symvi: {e}");
        std::process::exit(e.exit_code());
    }
}
