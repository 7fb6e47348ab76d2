fn main() {
    std::process::exit(seatrack_cli::run(std::env::args_os()));
}
