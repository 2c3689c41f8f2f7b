fn main() {
    let code = dylin_cli::run(std::env::args_os());
    std::process::exit(code);
}
