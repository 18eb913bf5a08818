fn main() {
    std::process::exit(nbnet::cli::run(std::env::args_os()));
}
