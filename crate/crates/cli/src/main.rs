fn main() {
    eprintln!("under construction");
}
