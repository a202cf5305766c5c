fn main() {
    std::process::exit(polyjepa::cli::run(std::env::args_os()));
}
