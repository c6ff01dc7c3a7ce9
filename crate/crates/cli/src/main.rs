fn main() {
    std::process::exit(coad_cli::run(std::env::args_os()));
}
