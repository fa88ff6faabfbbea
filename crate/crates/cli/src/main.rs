fn main() {
    std::process::exit(ccgan_cli::run(std::env::args_os()));
}
