fn main() {
    std::process::exit(hmpc::cli::main_with_args(std::env::args_os()));
}
