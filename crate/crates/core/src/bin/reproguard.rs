fn main() {
    std::process::exit(reproguard::cli::main_with_args(std::env::args_os()));
}
