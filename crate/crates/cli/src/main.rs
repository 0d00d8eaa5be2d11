fn main() {
    std::process::exit(risklab_cli::run(std::env::args_os()));
}
