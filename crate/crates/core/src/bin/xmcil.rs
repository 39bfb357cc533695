fn main() -> std::process::ExitCode {
    crossmodal_cil::cli::main_with(std::env::args_os())
}
