use std::path::Path;
use std::process::Command;

fn main() {
    let dir = std::env::var("CARGO_MANIFEST_DIR").unwrap_or_default();
    let git = Path::new(&dir).join("../../.git");
    for f in ["HEAD", "index"] {
        if git.join(f).exists() {
            println!("cargo:rerun-if-changed={}", git.join(f).display());
        }
    }
    let out = Command::new("git").args(["describe", "--always", "--dirty", "--tags"]).current_dir(&dir).output();
    if let Ok(out) = out {
        if out.status.success() {
            let id = String::from_utf8_lossy(&out.stdout).trim().to_string();
            println!("cargo:rustc-env=GPWAVES_GIT_DESCRIBE={id}");
        }
    }
}
