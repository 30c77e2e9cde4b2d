fn main() {
    std::process::exit(monowave::cli::main_with(std::env::args_os()));
}
