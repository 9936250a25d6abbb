fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("INVSQ_LOG", "warn")).init();
    std::process::exit(invsq_cli::run(std::env::args_os()));
}
