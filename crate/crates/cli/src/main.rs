fn main() {
    std::process::exit(ia_cli::run(std::env::args_os()));
}
