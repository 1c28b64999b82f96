fn main() {
    std::process::exit(spectrans::cli::run(std::env::args_os()));
}
