fn main() {
    std::process::exit(metanav::cli::main_with(std::env::args_os()));
}
