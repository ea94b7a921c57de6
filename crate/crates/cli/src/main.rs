fn main() {
    std::process::exit(gem_cli::run(std::env::args().collect()));
}
