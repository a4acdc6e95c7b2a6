fn main() {
    std::process::exit(shred::cli::run(std::env::args_os()));
}
