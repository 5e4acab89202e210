fn main() {
    std::process::exit(lobsim_cli::run(std::env::args_os()));
}
