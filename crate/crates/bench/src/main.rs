fn main() {
    std::process::exit(bsde_bench::cli::cli_main());
}
