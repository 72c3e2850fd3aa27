fn main() {
    std::process::exit(tabforge::cli::run(std::env::args_os()));
}
