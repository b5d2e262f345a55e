use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn header() -> String {
    std::fs::read_to_string(manifest_dir().join("include/dreamkit.h")).unwrap()
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let src = std::fs::read_to_string(manifest_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(
            h.contains(&format!(" {name}(")) || h.contains(&format!("*{name}(")),
            "{name}"
        );
    }
    for ty in [
        "typedef struct DkModel DkModel;",
        "typedef struct DkTrajectory DkTrajectory;",
        "DK_STATUS_BUFFER_TOO_SMALL = 5",
    ] {
        assert!(h.contains(ty), "{ty}");
    }
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().map(|_| cc)
}

/// Static library built alongside this test binary.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libdreamkit_ffi.a");
    lib.exists().then_some(lib)
}

fn compile(cc: &str, args: &[&str], extra: &[&Path]) -> std::process::Output {
    let mut cmd = Command::new(cc);
    cmd.args(args).arg("-I").arg(manifest_dir().join("include"));
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let src = manifest_dir().join("tests/c/smoke.c");
    let out = compile(
        &cc,
        &["-std=c99", "-Wall", "-Werror", "-fsyntax-only"],
        &[&src],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let dir = tempfile::tempdir().unwrap();
    let cpp = dir.path().join("include.cpp");
    std::fs::write(
        &cpp,
        "#include \"dreamkit.h\"\nint main() { return dk_version() ? 0 : 1; }\n",
    )
    .unwrap();
    if Command::new("c++").arg("--version").output().is_ok() {
        let out = Command::new("c++")
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(manifest_dir().join("include"))
            .arg(&cpp)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn c_program_links_and_runs() {
    let (Some(cc), Some(lib)) = (compiler(), static_lib()) else {
        eprintln!("no C compiler or static library; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let src = manifest_dir().join("tests/c/smoke.c");
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-I"])
        .arg(manifest_dir().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-o"])
        .arg(&exe)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "{}{}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
