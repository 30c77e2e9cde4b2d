//! Compiles a C translation unit against the generated header.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include "monowave.h"
#include <stdio.h>

int main(void) {
    MwKinetics *k = NULL;
    MwEquilibria *e = NULL;
    MwWave *w = NULL;
    size_t n = 0;
    bool b = false;
    double state[1], ind, c, r, lam;
    MwStability s;
    int code;
    if (mw_kinetics_cubic(0.25, &k) != MW_STATUS_OK) {
        fprintf(stderr, "%s\n", mw_last_error());
        return 1;
    }
    mw_kinetics_species(k, &n);
    mw_equilibria(k, &e);
    mw_equilibria_len(e, &n, &b);
    mw_equilibria_get(e, 0, state, 1, &s, &ind);
    mw_wave_direct(k, -40.0, 40.0, 0.1, 10.0, &w);
    mw_wave_summary(w, &c, &r, &b);
    mw_wave_profile_shape(w, &n, &n);
    mw_wave_profile(w, state, 0, state, 0);
    mw_lambda1(k, state, 1, &lam);
    mw_run_config("x", "wave", "y", 0, false, &code);
    mw_wave_free(w);
    mw_equilibria_free(e);
    mw_kinetics_free(k);
    printf("%s %d\n", mw_version(), (int)MW_STABILITY_STABLE);
    return 0;
}
"#;

#[test]
fn header_compiles_as_c11() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = std::env::temp_dir().join(format!("mw-header-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let out = Command::new(cc)
        .args(["-std=c11", "-Wall", "-Wextra", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Links the program against the shared library built next to this test
/// binary and runs it.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let libdir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    if !libdir.join("libmonowave_ffi.so").exists() {
        eprintln!("shared library not found in {}; skipping", libdir.display());
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = std::env::temp_dir().join(format!("mw-link-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("main.c");
    let bin = dir.join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let build = Command::new(cc)
        .args(["-std=c11", "-I"])
        .arg(&include)
        .arg(&src)
        .arg("-o")
        .arg(&bin)
        .arg(format!("-L{}", libdir.display()))
        .arg("-lmonowave_ffi")
        .arg(format!("-Wl,-rpath,{}", libdir.display()))
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&bin).output().unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
