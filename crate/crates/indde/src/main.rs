fn main() {
    std::process::exit(indde::cli::main_entry());
}
