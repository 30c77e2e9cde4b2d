use std::ffi::{CStr, CString};
use std::ptr;

use monowave_ffi::*;

fn last_error() -> String {
    let p = mw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(mw_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn cubic_equilibria_through_handles() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(mw_kinetics_cubic(0.25, &mut k), MwStatus::Ok);
        let mut n = 0usize;
        assert_eq!(mw_kinetics_species(k, &mut n), MwStatus::Ok);
        assert_eq!(n, 1);

        let mut e = ptr::null_mut();
        assert_eq!(mw_equilibria(k, &mut e), MwStatus::Ok);
        let (mut len, mut bistable) = (0usize, false);
        assert_eq!(mw_equilibria_len(e, &mut len, &mut bistable), MwStatus::Ok);
        assert_eq!(len, 3);
        assert!(bistable);
        let expected = [
            (0.0, MwStability::Stable),
            (0.25, MwStability::Unstable),
            (1.0, MwStability::Stable),
        ];
        for (i, (u, s)) in expected.iter().enumerate() {
            let mut state = [f64::NAN];
            let mut stab = MwStability::Unclassified;
            let mut ind = 0.0;
            assert_eq!(mw_equilibria_get(e, i, state.as_mut_ptr(), 1, &mut stab, &mut ind), MwStatus::Ok);
            assert!((state[0] - u).abs() < 1e-8);
            assert_eq!(stab, *s);
        }
        let mut stab = MwStability::Unclassified;
        let mut ind = 0.0;
        let mut state = [0.0];
        assert_eq!(
            mw_equilibria_get(e, 7, state.as_mut_ptr(), 1, &mut stab, &mut ind),
            MwStatus::InvalidInput
        );
        assert!(last_error().contains("out of range"));
        assert_eq!(
            mw_equilibria_get(e, 0, state.as_mut_ptr(), 0, &mut stab, &mut ind),
            MwStatus::BufferTooSmall
        );
        mw_equilibria_free(e);
        mw_kinetics_free(k);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(mw_kinetics_cubic(0.25, ptr::null_mut()), MwStatus::NullPointer);
        assert!(last_error().contains("null"));
        let mut n = 0usize;
        assert_eq!(mw_kinetics_species(ptr::null(), &mut n), MwStatus::NullPointer);
        mw_kinetics_free(ptr::null_mut());
        mw_wave_free(ptr::null_mut());
        mw_equilibria_free(ptr::null_mut());
    }
}

#[test]
fn config_errors_carry_the_field_path() {
    let text = CString::new("[system]\nfamily = \"nagumo\"\n").unwrap();
    let mut k = ptr::null_mut();
    let s = unsafe { mw_kinetics_from_toml(text.as_ptr(), &mut k) };
    assert_eq!(s, MwStatus::Config);
    assert!(k.is_null());
    assert!(last_error().contains("system.family"), "{}", last_error());
}

#[test]
fn nagumo_wave_matches_closed_form_speed() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(mw_kinetics_cubic(0.25, &mut k), MwStatus::Ok);
        let mut w = ptr::null_mut();
        assert_eq!(mw_wave_direct(k, -40.0, 40.0, 0.1, 30.0, &mut w), MwStatus::Ok, "{}", last_error());
        let (mut c, mut r, mut acc) = (0.0, 0.0, false);
        assert_eq!(mw_wave_summary(w, &mut c, &mut r, &mut acc), MwStatus::Ok);
        let exact = 0.5 / 2f64.sqrt();
        assert!((c - exact).abs() < 0.02 * exact, "c = {c}");
        assert!(acc && r <= 1e-3);

        let (mut n, mut d) = (0usize, 0usize);
        assert_eq!(mw_wave_profile_shape(w, &mut n, &mut d), MwStatus::Ok);
        assert_eq!(d, 1);
        let mut x = vec![0.0; n];
        let mut u = vec![0.0; n * d];
        assert_eq!(mw_wave_profile(w, x.as_mut_ptr(), n, u.as_mut_ptr(), n), MwStatus::Ok);
        assert!(x.windows(2).all(|p| p[1] > p[0]));
        assert!(u.windows(2).all(|p| p[1] >= p[0] - 1e-12));
        assert_eq!(mw_wave_profile(w, x.as_mut_ptr(), n - 1, u.as_mut_ptr(), n), MwStatus::BufferTooSmall);
        mw_wave_free(w);
        mw_kinetics_free(k);
    }
}

#[test]
fn lambda1_of_constant_state() {
    let text = CString::new(
        "[system]\nfamily = \"periodic_diffusion\"\nreaction = { name = \"cubic\", a = 0.25 }\n\
         medium = { name = \"constant\", d = 1.0, period = 20.0 }\n",
    )
    .unwrap();
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(mw_kinetics_from_toml(text.as_ptr(), &mut k), MwStatus::Ok, "{}", last_error());
        let u = vec![0.25; 256];
        let mut l = 0.0;
        assert_eq!(mw_lambda1(k, u.as_ptr(), u.len(), &mut l), MwStatus::Ok);
        assert!((l - 0.1875).abs() < 1e-6, "{l}");
        mw_kinetics_free(k);

        let mut cubic = ptr::null_mut();
        assert_eq!(mw_kinetics_cubic(0.25, &mut cubic), MwStatus::Ok);
        assert_eq!(mw_lambda1(cubic, u.as_ptr(), u.len(), &mut l), MwStatus::Precondition);
        mw_kinetics_free(cubic);
    }
}

#[test]
fn run_config_writes_registry() {
    let dir = std::env::temp_dir().join(format!("mw-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("eq.toml");
    std::fs::write(&cfg, "[system]\nfamily = \"reaction_diffusion\"\nreaction = { name = \"cubic\", a = 0.3 }\n").unwrap();
    let path = CString::new(cfg.to_str().unwrap()).unwrap();
    let out = CString::new(dir.join("out").to_str().unwrap()).unwrap();
    let task = CString::new("equilibria").unwrap();
    let mut code = -1;
    let s = unsafe { mw_run_config(path.as_ptr(), task.as_ptr(), out.as_ptr(), 3, false, &mut code) };
    assert_eq!(s, MwStatus::Ok, "{}", last_error());
    assert_eq!(code, 0);
    let reg = std::fs::read_to_string(dir.join("out/registry.jsonl")).unwrap();
    assert_eq!(reg.lines().count(), 1);

    let bad = CString::new("nope").unwrap();
    let s = unsafe { mw_run_config(path.as_ptr(), bad.as_ptr(), out.as_ptr(), 3, false, &mut code) };
    assert_eq!(s, MwStatus::InvalidInput);
    std::fs::remove_dir_all(&dir).unwrap();
}
