fn main() -> std::process::ExitCode {
    lookahead_fuzz::cli::main()
}
