fn main() {
    std::process::exit(earcough::cli::run(std::env::args_os()));
}
