fn main() {
    std::process::exit(rellich::cli::main());
}
