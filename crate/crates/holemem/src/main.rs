fn main() {
    std::process::exit(holemem::cli::run());
}
