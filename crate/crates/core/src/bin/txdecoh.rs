fn main() {
    std::process::exit(txdecoh::cli::execute(std::env::args_os()));
}
