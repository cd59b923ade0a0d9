fn main() {
    std::process::exit(vss_core::cli::main_with(std::env::args_os()));
}
