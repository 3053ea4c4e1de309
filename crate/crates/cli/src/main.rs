fn main() {
    std::process::exit(bellman_cli::run_cli(std::env::args_os()));
}
