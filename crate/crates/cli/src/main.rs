fn main() {
    std::process::exit(stac_cli::run(std::env::args_os()));
}
