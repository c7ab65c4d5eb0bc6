fn main() {
    std::process::exit(lyocert::cli::run(std::env::args_os()));
}
