fn main() {
    std::process::exit(cqed_chip::cli::run(std::env::args_os()));
}
