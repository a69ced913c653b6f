fn main() {
    std::process::exit(tactile_cli::run(std::env::args_os()));
}
