fn main() {
    std::process::exit(proxrestart::cli::run_cli(std::env::args()));
}
