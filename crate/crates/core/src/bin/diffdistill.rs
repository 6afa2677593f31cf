fn main() {
    std::process::exit(diffdistill::cli::run(std::env::args_os()));
}
