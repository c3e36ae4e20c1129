fn main() {
    std::process::exit(pemsim::cli::main_with_args(std::env::args_os()));
}
