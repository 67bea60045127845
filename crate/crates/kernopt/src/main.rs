fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let code = kernopt::cli::main_with_args(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
