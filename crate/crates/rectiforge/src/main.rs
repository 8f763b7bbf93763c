fn main() {
    std::process::exit(rectiforge::cli::main_with(std::env::args_os()));
}
