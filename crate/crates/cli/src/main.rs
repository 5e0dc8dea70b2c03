fn main() {
    std::process::exit(obstacle_epi_cli::run(std::env::args_os()));
}
