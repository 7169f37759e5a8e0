fn main() -> std::process::ExitCode {
    semfield::cli::main()
}
