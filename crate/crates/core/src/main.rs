fn main() {
    std::process::exit(gs_spde::cli::main_with_args(std::env::args_os()));
}
