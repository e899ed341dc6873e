fn main() {
    std::process::exit(pseudoheat::cli::main_with_args(std::env::args_os()));
}
