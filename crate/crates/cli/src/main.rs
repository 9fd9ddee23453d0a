fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(iwsl_cli::run(std::env::args_os()))
}
