fn main() {
    std::process::exit(activecam::harness::cli::main_with_args(std::env::args_os()));
}
