fn main() {
    std::process::exit(volumetrica::pipeline::cli_main(std::env::args_os()));
}
