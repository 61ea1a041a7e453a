fn main() {
    std::process::exit(probeflow::cli::run(std::env::args_os()));
}
