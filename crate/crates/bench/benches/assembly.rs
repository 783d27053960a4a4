// placeholder benches, filled in once the library exists
fn main() {}
