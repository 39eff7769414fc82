fn main() {
    std::process::exit(vidfill::cli::run(std::env::args_os().skip(1)));
}
