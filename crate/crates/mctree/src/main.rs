use std::process::ExitCode;

fn main() -> ExitCode {
    mctree::cli::main()
}
