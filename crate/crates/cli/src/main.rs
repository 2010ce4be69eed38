fn main() {
    std::process::exit(hpr_cli::run(std::env::args_os()));
}
