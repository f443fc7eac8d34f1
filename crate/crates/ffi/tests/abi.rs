use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use contract_sa_ffi::*;

fn last_error() -> String {
    let need = unsafe { csa_last_error_message(ptr::null_mut(), 0) };
    if need == 0 {
        return String::new();
    }
    let mut buf = vec![0 as c_char; need];
    unsafe { csa_last_error_message(buf.as_mut_ptr(), need) };
    let bytes: Vec<u8> = buf[..need - 1].iter().map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn envelope_round_trip() {
    unsafe {
        let (mut c, mut s) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(csa_norm_linf(&mut c), CsaStatus::Ok);
        assert_eq!(csa_norm_lp(4.0, &mut s), CsaStatus::Ok);
        let mut env = ptr::null_mut();
        assert_eq!(csa_envelope_new(c, s, 0.5, &mut env), CsaStatus::Ok);
        // the norms are copied, so freeing them early is fine
        csa_norm_free(c);
        csa_norm_free(s);

        let x = [1.0, -2.0, 0.5];
        let (mut value, mut residual) = (0.0, 0.0);
        assert_eq!(csa_envelope_evaluate(env, x.as_ptr(), 3, 0.0, &mut value, &mut residual), CsaStatus::Ok);
        // f(x) = 2 bounds the envelope from above
        assert!(value > 0.0 && value < 2.0);
        assert!(residual >= 0.0);
        assert_eq!(last_error(), "");

        let mut grad = [0.0; 3];
        assert_eq!(csa_envelope_gradient(env, x.as_ptr(), 3, 0.0, grad.as_mut_ptr()), CsaStatus::Ok);
        assert!(grad[1] < 0.0);
        csa_envelope_free(env);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut n = ptr::null_mut();
        assert_eq!(csa_norm_lp(1.0, &mut n), CsaStatus::InvalidArgument);
        assert!(n.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(csa_norm_linf(ptr::null_mut()), CsaStatus::NullPointer);
        assert!(last_error().contains("NULL"));

        let mut s = ptr::null_mut();
        let mut c = ptr::null_mut();
        csa_norm_linf(&mut c);
        csa_norm_linf(&mut s);
        let mut env = ptr::null_mut();
        // the sup-norm cannot smooth
        assert_eq!(csa_envelope_new(c, s, 1.0, &mut env), CsaStatus::InvalidArgument);
        csa_norm_free(c);
        csa_norm_free(s);

        let mut out = 0.0;
        assert_eq!(
            csa_bound_tdn(0.9, 1, 0.5, 1.0, 1.0, 10, &mut out),
            CsaStatus::PreconditionViolated
        );
        assert!(last_error().contains("exceeds"));
        let mut ok = 0.0;
        assert_eq!(csa_bound_tdn(0.9, 1, 1e-3, 1.0, 1.0, 10, &mut ok), CsaStatus::Ok);
        assert!(ok > 0.0);
        assert_eq!(last_error(), "");
    }
}

#[test]
fn truncated_message_is_terminated() {
    unsafe {
        csa_norm_linf(ptr::null_mut());
        let mut buf = [1 as c_char; 4];
        let need = csa_last_error_message(buf.as_mut_ptr(), buf.len());
        assert!(need > buf.len());
        assert_eq!(buf[3], 0);
    }
}

#[test]
fn mdp_values() {
    unsafe {
        let mut mdp = ptr::null_mut();
        assert_eq!(csa_mdp_random(5, 2, 0.8, 3, &mut mdp), CsaStatus::Ok);
        assert_eq!(csa_mdp_n_states(mdp), 5);
        assert_eq!(csa_mdp_n_actions(ptr::null()), 0);
        let mut q = [0.0; 10];
        assert_eq!(csa_mdp_q_star(mdp, q.as_mut_ptr(), 10), CsaStatus::Ok);
        // greedy values dominate the value of any policy
        let probs = [0.5; 10];
        let mut v = [0.0; 5];
        assert_eq!(csa_mdp_policy_value(mdp, probs.as_ptr(), 10, v.as_mut_ptr(), 5), CsaStatus::Ok);
        for s in 0..5 {
            assert!(q[2 * s].max(q[2 * s + 1]) >= v[s] - 1e-9);
        }
        assert_eq!(
            csa_mdp_policy_value(mdp, probs.as_ptr(), 9, v.as_mut_ptr(), 5),
            CsaStatus::DimensionMismatch
        );
        csa_mdp_free(mdp);
    }
}

#[test]
fn run_spec_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CString::new(
        r#"name = "ffi"
seed = 1
paths = 3
k_max = 40

[experiment]
kind = "tdn"
n = 2
mdp = { kind = "random", n_states = 4, n_actions = 2, beta = 0.8, seed = 2 }
policy = { kind = "uniform" }
schedule = { kind = "theorem4" }
"#,
    )
    .unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let status = unsafe { csa_run_spec(spec.as_ptr(), ptr::null(), out.as_ptr()) };
    assert_eq!(status, CsaStatus::Ok, "{}", last_error());
    assert!(dir.path().join("ffi.csv").exists());

    let bad = CString::new("name = 1").unwrap();
    assert_eq!(unsafe { csa_run_spec(bad.as_ptr(), ptr::null(), out.as_ptr()) }, CsaStatus::Parse);
}

/// Compiles `tests/c/smoke.c` against the generated header and the static
/// library, then runs it. Skipped when no C compiler is on PATH.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/abi-* -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcontract_sa_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let compile = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(compile.status.success(), "{}", String::from_utf8_lossy(&compile.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
