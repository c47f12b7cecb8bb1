fn main() -> std::process::ExitCode {
    gap_core::cli::main()
}
