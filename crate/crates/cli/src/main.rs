fn main() {
    std::process::exit(framescale_cli::main_with_args(std::env::args_os()));
}
