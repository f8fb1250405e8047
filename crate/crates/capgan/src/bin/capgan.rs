fn main() { println!("capgan"); }
