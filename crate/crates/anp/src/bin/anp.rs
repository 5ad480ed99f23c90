fn main() {
    std::process::exit(anp::cli::run(std::env::args()));
}
