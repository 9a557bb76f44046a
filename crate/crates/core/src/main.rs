fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MRCAST_LOG", "warn")).init();
    std::process::exit(mrcast::cli::run(std::env::args_os()));
}
