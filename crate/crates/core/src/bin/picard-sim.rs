fn main() {
    std::process::exit(picard_sim::cli::run_cli(std::env::args_os()));
}
