fn main() {
    std::process::exit(metra::cli::run_from(std::env::args_os()));
}
