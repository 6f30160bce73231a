fn main() {
    std::process::exit(sparsevd::cli::main());
}
