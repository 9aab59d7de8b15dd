fn main() {
    std::process::exit(dynwardrop::cli::run_cli(std::env::args_os()));
}
