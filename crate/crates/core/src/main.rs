fn main() {
    std::process::exit(pldc::cli::run(std::env::args_os()));
}
