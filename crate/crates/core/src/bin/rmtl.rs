fn main() {
    std::process::exit(rmtl::cli::run(std::env::args_os()));
}
