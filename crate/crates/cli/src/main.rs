fn main() {
    std::process::exit(uvp_cli::main_with_args(std::env::args_os()));
}
