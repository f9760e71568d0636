fn main() {
    std::process::exit(gridcluster::cli::run(std::env::args_os()));
}
