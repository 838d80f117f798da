fn main() {
    std::process::exit(kova::harness::cli::main_with_args(std::env::args_os()));
}
