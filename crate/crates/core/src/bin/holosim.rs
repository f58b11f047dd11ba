fn main() {
    std::process::exit(holosim::cli::main_with_args(std::env::args_os()));
}
