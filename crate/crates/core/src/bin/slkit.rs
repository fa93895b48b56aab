fn main() {
    std::process::exit(slkit::cli::main());
}
