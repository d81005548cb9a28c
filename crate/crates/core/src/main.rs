fn main() {
    std::process::exit(wolfront::cli::main());
}
