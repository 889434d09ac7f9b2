use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let header = PathBuf::from(&crate_dir).join("include").join("windvol.h");

    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_language(cbindgen::Language::C)
        .with_include_guard("WINDVOL_H")
        .with_cpp_compat(true)
        .generate()
        .expect("unable to generate C bindings")
        .write_to_file(header);

    println!("cargo:rerun-if-changed=src/lib.rs");
}
