fn main() {
    std::process::exit(reluinv_cli::main_with_args(std::env::args_os()));
}
