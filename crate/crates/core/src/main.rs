fn main() {
    std::process::exit(wepo::cli::run(std::env::args_os()));
}
