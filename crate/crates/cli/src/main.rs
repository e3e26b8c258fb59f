fn main() {
    std::process::exit(utn_cli::run(std::env::args_os()));
}
