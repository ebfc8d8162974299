fn main() {
    std::process::exit(kwave::cli::run(std::env::args_os()));
}
