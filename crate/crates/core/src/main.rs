fn main() {
    std::process::exit(poupinn::cli::main_with_args(std::env::args_os()));
}
