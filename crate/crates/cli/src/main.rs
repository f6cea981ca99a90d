fn main() {
    std::process::exit(oal_cli::run(std::env::args_os()));
}
