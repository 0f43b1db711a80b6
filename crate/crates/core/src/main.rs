fn main() {
    std::process::exit(funmotif::cli::run(std::env::args_os()));
}
