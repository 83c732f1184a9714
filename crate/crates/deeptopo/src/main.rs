fn main() {
    std::process::exit(deeptopo::cli::main_with(std::env::args_os()));
}
