fn main() {
    std::process::exit(mcre_cli::run(std::env::args_os()));
}
