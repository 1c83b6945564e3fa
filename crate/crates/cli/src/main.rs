fn main() {
    std::process::exit(ghicast_cli::run(std::env::args_os()));
}
