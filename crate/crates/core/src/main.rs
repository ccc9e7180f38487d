fn main() {
    std::process::exit(lane3d::cli::run(std::env::args_os()));
}
