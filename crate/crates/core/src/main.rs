fn main() {
    std::process::exit(auxlearn::cli::run());
}
