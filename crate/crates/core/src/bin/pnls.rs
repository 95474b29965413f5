fn main() {
    std::process::exit(pnls::cli::run(std::env::args_os()));
}
