fn main() -> std::process::ExitCode {
    srtile::cli::main_with_args(std::env::args_os())
}
