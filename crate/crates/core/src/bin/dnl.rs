fn main() {
    std::process::exit(dnl::cli::main());
}
