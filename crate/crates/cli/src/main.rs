fn main() {
    std::process::exit(topoprune_cli::run(std::env::args_os()));
}
