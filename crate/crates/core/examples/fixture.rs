//! Write the synthetic field fixture to a directory and print the
//! manifest path.
fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixture".into());
    let f = covinterp::synthetic::write_field_fixture(std::path::Path::new(&dir), 60, 17)
        .expect("fixture written");
    println!("{}", f.manifest.display());
}
