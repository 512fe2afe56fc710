fn main() {
    std::process::exit(nonlinear_eigen::cli::run(std::env::args_os()));
}
