fn main() {
    std::process::exit(cestfit::cli::run_from(std::env::args_os()));
}
