fn main() {
    std::process::exit(plclab::cli::main_with(std::env::args_os()));
}
