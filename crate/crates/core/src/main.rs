fn main() {
    std::process::exit(adadrop::cli::run(std::env::args_os()));
}
