fn main() {
    std::process::exit(fmats::cli::run(std::env::args_os()));
}
