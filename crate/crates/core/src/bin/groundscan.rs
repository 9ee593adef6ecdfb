fn main() {
    std::process::exit(groundscan::cli::main_with_args(std::env::args_os()));
}
