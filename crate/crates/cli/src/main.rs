fn main() {
    std::process::exit(mitd_cli::run(std::env::args_os()));
}
