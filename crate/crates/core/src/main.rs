fn main() {
    std::process::exit(orbitpow::cli::run(std::env::args_os()));
}
