fn main() {
    std::process::exit(subring_core::cli::run());
}
