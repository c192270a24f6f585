fn main() {
    std::process::exit(stochop_cli::main_with_args(std::env::args_os()));
}
