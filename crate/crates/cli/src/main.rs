fn main() {
    std::process::exit(spikepack_cli::run(std::env::args_os()));
}
