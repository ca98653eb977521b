fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(geomflow::cli::cli_main(&argv));
}
