use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Files that cannot change study results: the command-line front end and
/// the self-check suites.
const FRONT_END: &[&str] = &["main.rs", "cli.rs", "selfcheck.rs"];

fn collect(dir: &Path, out: &mut Vec<PathBuf>) {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir).expect("readable source dir").map(|e| e.expect("dir entry").path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect(&p, out);
        } else if p.extension().is_some_and(|e| e == "rs") {
            out.push(p);
        }
    }
}

fn digest<'a>(files: impl Iterator<Item = &'a PathBuf>, root: &Path) -> String {
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(fs::read(f).expect("readable source file"));
        h.update([0]);
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn main() {
    let root = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets the manifest dir"));
    let src = root.join("src");
    let mut files = Vec::new();
    collect(&src, &mut files);
    let engine = files.iter().filter(|f| {
        let rel = f.strip_prefix(&src).expect("under src");
        !FRONT_END.iter().any(|x| rel == Path::new(x))
    });
    println!("cargo:rustc-env=RSTDR_ENGINE_HASH={}", digest(engine, &src));
    println!("cargo:rustc-env=RSTDR_BUILD_HASH={}", digest(files.iter(), &src));
    println!("cargo:rerun-if-changed=src");
}
