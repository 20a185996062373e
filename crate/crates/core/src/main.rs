fn main() {
    std::process::exit(endotrack::cli::main_with_args(std::env::args_os()));
}
