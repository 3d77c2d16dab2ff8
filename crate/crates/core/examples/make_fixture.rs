//! Writes the demo scene: `cargo run --example make_fixture -- [dir] [frames]`.

use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures/demo".into()));
    let frames = args.next().map_or(50, |f| f.parse().expect("frames must be an integer"));
    match physcene::fixture::write_demo_scene(&dir, frames) {
        Ok(path) => println!("{}", path.display()),
        Err(e) => {
            eprintln!("make_fixture: {e}");
            std::process::exit(4);
        }
    }
}
