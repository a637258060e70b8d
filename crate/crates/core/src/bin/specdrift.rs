fn main() {
    std::process::exit(specdrift::cli::main_with_args(std::env::args_os()));
}
