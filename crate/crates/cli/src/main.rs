fn main() {
    std::process::exit(ris_swipt_cli::run(std::env::args_os()));
}
