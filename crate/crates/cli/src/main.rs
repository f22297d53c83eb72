use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or(abstain_cli::app::LOG_ENV, "warn")).init();
    std::process::exit(abstain_cli::run(std::env::args_os()));
}
