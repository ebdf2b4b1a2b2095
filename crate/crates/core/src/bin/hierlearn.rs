fn main() {
    std::process::exit(hierlearn::cli::main_entry(std::env::args_os()));
}
