use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = fbrrt::cli::Args::parse();
    if let Err(e) = fbrrt::cli::run(&args) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
