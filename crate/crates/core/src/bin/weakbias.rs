fn main() -> std::process::ExitCode {
    weakbias::cli::main()
}
