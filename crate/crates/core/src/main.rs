fn main() {
    std::process::exit(robust_alm::cli::run(std::env::args_os()));
}
