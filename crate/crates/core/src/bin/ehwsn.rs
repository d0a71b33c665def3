fn main() {
    env_logger::init();
    std::process::exit(ehwsn::cli::cli(std::env::args_os()));
}
