fn main() {
    std::process::exit(sector_hilbert::cli::run(std::env::args_os()));
}
