//! Compiles and runs a C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "adadrop.h"

int main(void) {
    if (strlen(ad_version()) == 0) return 10;
    AdPenalty *p = NULL;
    if (ad_penalty_parse("mcp:a=1,lambda=1", &p) != AD_STATUS_OK) return 11;
    double w = 0.5, om = 0.0;
    if (ad_penalty_omega(p, &w, 1, &om) != AD_STATUS_OK) return 12;
    if (fabs(om - 0.375) > 1e-15) return 13;
    ad_penalty_free(p);

    AdPenalty *bad = NULL;
    if (ad_penalty_parse("mcp:a=1", &bad) != AD_STATUS_PARSE) return 14;
    if (ad_last_error_message() == NULL) return 15;

    double x[4] = {1.4142135623730951, 0.0, 0.0, 1.4142135623730951};
    double y[2] = {1.4142135623730951, 0.0};
    AdProblem *prob = NULL;
    if (ad_problem_new(x, y, 2, 2, 0, &prob) != AD_STATUS_OK) return 16;
    AdSolverConfig cfg = ad_solver_config_default();
    cfg.step = 1.0;
    cfg.iters = 1;
    AdTrace *t = NULL;
    if (ad_solve(prob, "iht", "hardthresh:k=1", &cfg, &t) != AD_STATUS_OK) return 17;
    double wk[2];
    if (ad_trace_iterate(t, ad_trace_len(t) - 1, wk) != AD_STATUS_OK) return 18;
    if (fabs(wk[0] - 1.0) > 1e-12 || wk[1] != 0.0) return 19;
    ad_trace_free(t);
    ad_problem_free(prob);
    printf("ok\n");
    return 0;
}
"#;

fn find_cc() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .map(String::from)
}

#[test]
fn c_program_links_and_runs() {
    let cc = find_cc().expect("a C compiler is required for the header test");
    let exe = std::env::current_exe().unwrap();
    // target/<profile>/deps/<test> -> target/<profile>
    let profile_dir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libadadrop_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("adadrop.h").exists());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
