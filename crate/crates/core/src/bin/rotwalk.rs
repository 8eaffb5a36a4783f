fn main() {
    std::process::exit(rotwalk::cli::run(std::env::args_os()));
}
