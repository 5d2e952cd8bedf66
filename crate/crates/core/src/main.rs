fn main() {
    std::process::exit(singular_heat::cli::main_entry(std::env::args_os()));
}
