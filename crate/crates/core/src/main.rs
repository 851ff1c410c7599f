fn main() { std::process::exit(ate_bandwidth::cli::main()); }
