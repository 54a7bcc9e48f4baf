fn main() -> std::process::ExitCode {
    boneage::cli::main_with_args(std::env::args_os())
}
