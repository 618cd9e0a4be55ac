fn main() -> std::process::ExitCode {
    depth_flexion::cli::main()
}
