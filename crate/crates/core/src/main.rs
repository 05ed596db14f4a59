fn main() {
    std::process::exit(factcon::cli::run(std::env::args_os()));
}
