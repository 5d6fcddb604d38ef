fn main() {
    std::process::exit(bidir_adapt::cli::run(std::env::args_os()));
}
