fn main() -> std::process::ExitCode {
    desksim_server::cli::main()
}
