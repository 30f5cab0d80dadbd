fn main() {
    std::process::exit(wetbeam::cli::run(std::env::args_os()));
}
