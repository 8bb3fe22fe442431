// Compiles a C program against the generated header and links the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

// Selecting only test targets does not produce the staticlib, so build it here.
// A separate target dir keeps clear of the lock held by the outer cargo.
fn static_lib(manifest: &Path) -> PathBuf {
    let target = manifest.join("../../target/c-smoke");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let status = Command::new(cargo)
        .args(["build", "--quiet", "--lib", "--manifest-path"])
        .arg(manifest.join("Cargo.toml"))
        .arg("--target-dir")
        .arg(&target)
        .status()
        .expect("cargo");
    assert!(status.success(), "building the static library failed");
    target.join("debug/libmetra_ffi.a")
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib(&manifest);
    assert!(lib.is_file(), "static library missing at {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("c_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c_smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success(), "cc failed");
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
