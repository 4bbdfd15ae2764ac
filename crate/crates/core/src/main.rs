fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(sparsepca::cli::cli_dispatch(&args));
}
