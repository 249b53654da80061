fn main() {
    std::process::exit(quenched::cli::main());
}
