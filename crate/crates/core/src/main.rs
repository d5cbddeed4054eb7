fn main() {
    std::process::exit(ssm_tracegen::cli::run(std::env::args_os()));
}
