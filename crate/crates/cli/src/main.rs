fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(cavity_gate_cli::main_with(&args));
}
