fn main() {
    std::process::exit(ode2vae::cli::run(std::env::args_os()));
}
