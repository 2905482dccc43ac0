fn main() {
    std::process::exit(frn_cli::run_cli(std::env::args_os()));
}
