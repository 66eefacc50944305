fn main() -> std::process::ExitCode {
    semiokg_cli::run(std::env::args_os())
}
