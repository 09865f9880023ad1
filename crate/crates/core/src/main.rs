fn main() {
    std::process::exit(pspin_critical::cli::run(std::env::args()));
}
