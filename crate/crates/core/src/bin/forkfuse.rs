fn main() {
    std::process::exit(forkfuse::cli::run_cli(std::env::args_os()));
}
