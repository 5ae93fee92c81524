fn main() {
    std::process::exit(sublin_gbm::cli::main_with_args(std::env::args_os()));
}
