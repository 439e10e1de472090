//! Compiles and links a C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

/// The static library built alongside this test: `target/<profile>/deps`
/// under `cargo test`, `target/<profile>` after `cargo build`.
fn static_lib() -> Option<PathBuf> {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let profile = deps.parent().unwrap().to_path_buf();
    [deps, profile].into_iter().map(|d| d.join("libsbi_forge_ffi.a")).find(|p| p.exists())
}

#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib().expect("libsbi_forge_ffi.a is built with the test");
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is available as `cc`");
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    let spec = sbi_forge::TaskSpec::by_name("gaussian_linear").unwrap();
    assert_eq!(stdout.trim(), format!("dims {} {} status 3 refs 10", spec.theta_dim, spec.x_dim));
}
