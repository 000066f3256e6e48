fn main() {
    std::process::exit(dsal::cli::run(std::env::args_os()));
}
