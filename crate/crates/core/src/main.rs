fn main() {
    std::process::exit(gaitadapt::cli::run_cli(std::env::args_os()));
}
