fn main() {
    std::process::exit(phirat_cli::run_from_args(std::env::args_os()));
}
