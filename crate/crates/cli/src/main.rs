fn main() {
    std::process::exit(kwdrift_cli::run(std::env::args_os()));
}
