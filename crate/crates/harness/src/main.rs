fn main() {
    std::process::exit(asss_harness::cli::main_with_args(std::env::args_os()));
}
