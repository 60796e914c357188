fn main() {
    std::process::exit(drc::cli::main_with_args(std::env::args_os()));
}
