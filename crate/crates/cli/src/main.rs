fn main() {
    std::process::exit(cdnerr_cli::main_with_args(std::env::args_os()));
}
