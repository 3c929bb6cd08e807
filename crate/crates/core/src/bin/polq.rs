fn main() {
    std::process::exit(polq::cli::main_entry());
}
