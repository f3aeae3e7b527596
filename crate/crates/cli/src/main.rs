fn main() {
    std::process::exit(wzlab_cli::main_with_args(std::env::args_os()));
}
