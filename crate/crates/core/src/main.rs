fn main() {
    std::process::exit(miglmm::cli::main_with(std::env::args().collect()));
}
