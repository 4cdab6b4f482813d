fn main() {
    std::process::exit(tempus::cli::run(std::env::args_os()));
}
