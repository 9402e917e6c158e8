fn main() {
    std::process::exit(multipac::cli::main_with_args(std::env::args_os()));
}
