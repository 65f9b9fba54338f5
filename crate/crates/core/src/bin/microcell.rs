fn main() -> std::process::ExitCode {
    microcell_qoe::cli::main()
}
