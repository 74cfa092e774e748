fn main() {
    std::process::exit(treecast::run(std::env::args_os()));
}
