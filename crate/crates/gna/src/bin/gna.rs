fn main() {
    std::process::exit(gna::cli::run());
}
