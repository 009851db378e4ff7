fn main() {
    std::process::exit(hri_interface::cli::run(std::env::args_os()));
}
