fn main() {
    std::process::exit(thor_lab::cli::run_with_args(std::env::args()));
}
