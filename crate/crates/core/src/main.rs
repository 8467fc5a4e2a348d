use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = blasso::cli::Cli::parse();
    std::process::exit(blasso::cli::run(cli));
}
