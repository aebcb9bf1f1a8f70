use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = ftn_cli::Cli::parse();
    if let Err(err) = ftn_cli::execute(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(ftn_cli::exit_code(&err));
    }
}
