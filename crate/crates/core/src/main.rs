fn main() {
    std::process::exit(svmcure::cli::run(std::env::args_os()));
}
