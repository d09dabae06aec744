fn main() {
    std::process::exit(hardlabel_cli::run(std::env::args_os()));
}
