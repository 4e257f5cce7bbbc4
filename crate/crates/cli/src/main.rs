fn main() {
    std::process::exit(setmdp::run(std::env::args_os()));
}
