fn main() {
    std::process::exit(mvi_core::cli::run_command(std::env::args_os()));
}
