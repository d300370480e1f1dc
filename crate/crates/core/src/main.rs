fn main() {
    std::process::exit(setvalued::cli::run_from(std::env::args_os()));
}
