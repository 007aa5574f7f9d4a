fn main() {
    std::process::exit(vidsound::cli::run(std::env::args_os()));
}
