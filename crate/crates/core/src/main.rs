fn main() {
    std::process::exit(qmap_spectra::cli::run_from_args(std::env::args_os()));
}
