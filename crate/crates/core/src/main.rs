fn main() {
    std::process::exit(wealthsim::experiment::main_with_args(std::env::args_os()));
}
