fn main() {
    std::process::exit(tripdiary_cli::main_with_args(std::env::args_os()));
}
