fn main() -> std::process::ExitCode {
    poolscope::cli::main_with_args(std::env::args_os())
}
