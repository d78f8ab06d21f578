fn main() {
    std::process::exit(impsim::cli::cli_main(std::env::args_os()));
}
