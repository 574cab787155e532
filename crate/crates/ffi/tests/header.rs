use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn cc() -> String {
    std::env::var("CC").unwrap_or_else(|_| "cc".into())
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(manifest().join("include/sns_qkd.h")).unwrap();
    for name in [
        "sns_tally_from_json",
        "sns_tally_free",
        "sns_analyze",
        "sns_secure_key_rate",
        "sns_last_error",
        "typedef struct SnsTally SnsTally",
    ] {
        assert!(h.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = manifest().join("include");
    for (lang, std) in [("c", "-std=c11"), ("c++", "-std=c++17")] {
        let status = Command::new(cc())
            .args(["-fsyntax-only", "-Wall", "-Werror", std, "-x", lang, "-I"])
            .arg(&include)
            .arg(manifest().join("tests/c/smoke.c"))
            .status()
            .unwrap();
        assert!(status.success(), "{lang}");
    }
}

/// Directory holding the library artefacts of this build profile.
fn artefact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = artefact_dir().join("libsns_qkd_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(cc())
        .arg("-I")
        .arg(manifest().join("include"))
        .arg(manifest().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let tally = manifest().join("../core/data/tallies/1002km.json");
    let out = Command::new(&exe).arg(&tally).output().unwrap();
    assert!(
        out.status.success(),
        "{:?} {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.trim().ends_with(" 1"), "{text}");
}
