fn main() {
    std::process::exit(equilibria::cli::run_cli(std::env::args_os()));
}
