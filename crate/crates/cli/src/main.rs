fn main() {
    std::process::exit(fracvar_cli::run_args(std::env::args_os()));
}
