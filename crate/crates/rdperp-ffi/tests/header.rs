//! Keeps the committed C header in sync with the exported surface.
//!
//! Regenerate after changing `src/lib.rs`:
//!
//! ```text
//! RDP_REGEN_HEADER=1 cargo test -p rdperp-ffi --test header
//! ```

use std::path::Path;

fn generate_header() -> String {
    let crate_dir = env!("CARGO_MANIFEST_DIR");
    let bindings = cbindgen::generate(crate_dir).expect("cbindgen failed");
    let mut buf = Vec::new();
    bindings.write(&mut buf);
    String::from_utf8(buf).expect("header is not UTF-8")
}

#[test]
fn committed_header_is_current() {
    let header_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rdperp.h");
    let generated = generate_header();
    if std::env::var_os("RDP_REGEN_HEADER").is_some() {
        std::fs::write(&header_path, &generated).expect("cannot write header");
        return;
    }
    let committed = std::fs::read_to_string(&header_path)
        .expect("include/rdperp.h is missing; regenerate with RDP_REGEN_HEADER=1");
    assert_eq!(
        committed, generated,
        "include/rdperp.h is stale; regenerate with RDP_REGEN_HEADER=1"
    );
}
