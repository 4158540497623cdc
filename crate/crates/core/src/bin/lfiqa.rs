fn main() {
    std::process::exit(lfiqa::cli::run(std::env::args_os()));
}
