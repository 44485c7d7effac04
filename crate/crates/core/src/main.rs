fn main() {
    std::process::exit(tractsynth::cli::run(std::env::args_os()));
}
