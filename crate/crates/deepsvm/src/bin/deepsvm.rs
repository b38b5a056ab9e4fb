fn main() {
    std::process::exit(deepsvm::cli::run());
}
