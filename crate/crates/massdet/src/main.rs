fn main() {
    std::process::exit(massdet::cli::main(std::env::args_os()));
}
