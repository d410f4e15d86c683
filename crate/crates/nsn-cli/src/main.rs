fn main() {
    std::process::exit(nsn_cli::run());
}
