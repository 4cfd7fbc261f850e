fn main() {
    std::process::exit(iad_core::cli::run(std::env::args_os()));
}
