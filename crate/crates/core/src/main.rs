fn main() {
    std::process::exit(geoneg::cli::run(std::env::args_os()));
}
