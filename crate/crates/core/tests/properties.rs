use monowave::config;
use monowave::kinetics::*;
use monowave::profiles::*;
use monowave::pulsating::{cell_translate, lambda1, PeriodicMedium};
use monowave::semiflow::{Scheme, Semiflow};
use monowave::speeds::cylinder_eigenvalue;
use proptest::prelude::*;

fn grid(n: usize) -> Grid {
    Grid::new(-10.0, 10.0, n).unwrap()
}

/// Nondecreasing scalar profile from nonnegative increments.
fn monotone(g: &Grid, incs: &[f64]) -> Profile {
    let n = g.n_points();
    let total: f64 = incs.iter().sum::<f64>().max(1e-300);
    let mut acc = 0.0;
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            acc += incs[i % incs.len()];
            acc / (total * (n / incs.len() + 1) as f64)
        })
        .collect();
    let (l, r) = (vals[0], vals[n - 1]);
    Profile::new(g.clone(), 1, vals, vec![l], vec![r]).unwrap()
}

fn increments() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 8..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_composes(incs in increments(), a in -5.0f64..5.0, k in -40i32..40) {
        // Flat outside [-5, 5], so no shift below pushes data out of the window.
        let g = Grid::new(-20.0, 20.0, 401).unwrap();
        let inner = monotone(&grid(101), &incs);
        let p = Profile::from_fn(g.clone(), 1, |x, out| inner.eval_into(2.0 * x, out));
        let b = k as f64 * g.dx();
        let lhs = translate(&translate(&p, b), a);
        let rhs = translate(&p, a + b);
        prop_assert!(lhs.sup_distance_nodes(&rhs).unwrap() <= 1e-12);
    }

    #[test]
    fn rescale_keeps_monotonicity(incs in increments(), xi in 1.0f64..20.0) {
        let p = monotone(&grid(151), &incs);
        let q = rescale(&p, xi).unwrap();
        prop_assert!(q.is_nondecreasing(0.0));
    }

    #[test]
    fn compare_is_an_order(incs in increments(), d1 in prop::collection::vec(0.0f64..0.1, 101),
                           d2 in prop::collection::vec(0.0f64..0.1, 101)) {
        let g = grid(101);
        let p = monotone(&g, &incs);
        prop_assert_eq!(compare(&p, &p, ORDER_TOL).unwrap().verdict, OrderVerdict::Equal);
        let bump = |base: &Profile, d: &[f64]| {
            let v: Vec<f64> = base.values().iter().zip(d).map(|(a, b)| a + b).collect();
            Profile::new(g.clone(), 1, v.clone(), vec![v[0]], vec![v[100]]).unwrap()
        };
        let q = bump(&p, &d1);
        let r = bump(&q, &d2);
        let pq = compare(&p, &q, ORDER_TOL).unwrap().verdict;
        let qp = compare(&q, &p, ORDER_TOL).unwrap().verdict;
        prop_assert!(matches!(pq, OrderVerdict::Leq | OrderVerdict::Equal));
        prop_assert_eq!(pq == OrderVerdict::Leq, qp == OrderVerdict::Geq);
        prop_assert!(matches!(compare(&p, &r, ORDER_TOL).unwrap().verdict, OrderVerdict::Leq | OrderVerdict::Equal));
    }

    #[test]
    fn lower_crossing_precedes_upper_crossing(incs in increments(), d0 in 0.01f64..0.45, db in 0.01f64..0.45) {
        let g = grid(301);
        let raw = monotone(&g, &incs);
        let (lo, hi) = raw.component_range(0);
        prop_assume!(hi - lo > 1e-6);
        let v: Vec<f64> = raw.values().iter().map(|x| (x - lo) / (hi - lo)).collect();
        let p = Profile::new(g.clone(), 1, v, vec![0.0], vec![1.0]).unwrap();
        let a = level_crossing(&p, &LevelBox::lower_scalar(d0)).unwrap();
        let b = level_crossing(&p, &LevelBox::upper_scalar(1.0 - db)).unwrap();
        if a.is_finite() && b.is_finite() {
            prop_assert!(a <= b + 1e-12, "a = {a}, b = {b}");
        }
    }

    #[test]
    fn helly_limit_is_monotone(seqs in prop::collection::vec(increments(), 4..12)) {
        let g = grid(81);
        let samples: Vec<Profile> = seqs.iter().map(|s| monotone(&g, s)).collect();
        let dense: Vec<f64> = (0..161).map(|i| -10.0 + i as f64 * 0.125).collect();
        let h = helly_extract(&samples, &dense).unwrap();
        prop_assert!(h.limit.is_nondecreasing(0.0));
    }
}

// ---------------------------------------------------------------------------
// Kinetics

fn fd_jacobian(r: &Reaction, t: f64, u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let h = 1e-6;
    let mut out = vec![vec![0.0; n]; n];
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    for j in 0..n {
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[j] += h;
        um[j] -= h;
        r.eval(t, &up, &mut fp);
        r.eval(t, &um, &mut fm);
        for i in 0..n {
            out[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jacobian_matches_finite_differences(
        a in prop::collection::vec(0.05f64..0.95, 3),
        coupling in 0.0f64..2.0,
        u in prop::collection::vec(0.0f64..1.0, 3),
        t in 0.0f64..1.0,
    ) {
        let reactions = [
            Reaction::Cubic { a: a[0] },
            Reaction::PeriodicCubic { a0: a[1], amp: 0.1, period: 1.0 },
            Reaction::CoupledCubic { a: a.clone(), coupling },
            Reaction::Polynomial { coeffs: vec![0.0, -a[0], 1.0 + a[0], -1.0] },
        ];
        for r in &reactions {
            let n = r.n_species();
            let st = &u[..n];
            let mut jac = nalgebra::DMatrix::zeros(n, n);
            r.jacobian_into(t, st, &mut jac);
            let fd = fd_jacobian(r, t, st);
            for i in 0..n {
                for j in 0..n {
                    let scale = jac[(i, j)].abs().max(1e-3);
                    prop_assert!((jac[(i, j)] - fd[i][j]).abs() <= 1e-5 * scale, "{r:?} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn certificate_ignores_equilibrium_order(a in 0.05f64..0.95, perm in Just(()).prop_perturb(|_, mut rng| {
        let mut p = vec![0usize, 1, 2];
        for i in (1..3).rev() {
            p.swap(i, rng.random_range(0..=i));
        }
        p
    })) {
        let k = Kinetics::cubic(a);
        let rep = classify_bistability(&k).unwrap();
        let mut shuffled = rep.clone();
        shuffled.equilibria = perm.iter().map(|&i| rep.equilibria[i].clone()).collect();
        let again = certify(shuffled, &k.bottom, &k.top);
        prop_assert_eq!(again.bistable, rep.bistable);
        prop_assert_eq!(again.unordered_certificate, rep.unordered_certificate);
        prop_assert_eq!(again.alpha_list, rep.alpha_list);
    }
}

#[test]
fn cubic_labels_follow_the_sign_of_the_derivative() {
    for a in [0.1, 0.25, 0.4] {
        let rep = classify_bistability(&Kinetics::cubic(a)).unwrap();
        assert!(rep.bistable);
        for e in &rep.equilibria {
            let u = e.state[0];
            let fp = -3.0 * u * u + 2.0 * (1.0 + a) * u - a;
            let want = if fp < 0.0 { Stability::Stable } else { Stability::Unstable };
            assert_eq!(e.stability, want, "a = {a}, u = {u}");
        }
    }
}

// ---------------------------------------------------------------------------
// Semiflow

fn cosine_kinetics(a: f64, eps: f64) -> Kinetics {
    Kinetics::periodic_diffusion(Reaction::Cubic { a }, PeriodicMedium::cosine(1.0, eps, 2.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn equilibria_are_fixed_by_a_step(a in 0.05f64..0.95) {
        let k = Kinetics::cubic(a);
        let g = Grid::with_spacing(-10.0, 10.0, 0.1).unwrap();
        let s = Semiflow::auto(k, g.clone(), Scheme::ExplicitEuler).unwrap();
        for u in [0.0, a, 1.0] {
            let p = Profile::constant(g.clone(), &[u]);
            let q = s.step(&p, 0.0).unwrap();
            prop_assert!(q.sup_distance_nodes(&p).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn audits_pass_for_random_parameters(a in 0.05f64..0.95, eps in 0.0f64..0.5, seed in 0u64..1000) {
        let g = Grid::with_spacing(-10.0, 10.0, 0.1).unwrap();
        for (k, scheme) in [
            (Kinetics::cubic(a), Scheme::ExplicitEuler),
            (cosine_kinetics(a, eps), Scheme::ExplicitEuler),
            (cosine_kinetics(a, eps), Scheme::ImexDiffusionImplicit),
        ] {
            let s = Semiflow::auto(k, g.clone(), scheme).unwrap();
            let audit = s.audit_axioms(4, seed).unwrap();
            prop_assert!(audit.comparison_violation <= 1e-10);
            prop_assert!(audit.box_violation <= 1e-10);
            prop_assert!(audit.translation_residual <= 1e-12);
        }
    }
}

// ---------------------------------------------------------------------------
// Cylinder eigenvalues

fn cylinder(e0: f64, e1: f64) -> Kinetics {
    let cs = CrossSection {
        length: 1.0,
        n_cross: 12,
        diffusion: vec![1.0],
        advection: vec![Advection::Linear { e0, e1 }],
    };
    Kinetics::cylinder(Reaction::Cubic { a: 0.25 }, vec![1.0], cs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn reversing_advection_mirrors_the_eigenvalue(mu in 0.0f64..3.0, e0 in -1.0f64..1.0, e1 in -1.0f64..1.0) {
        let plus = cylinder_eigenvalue(&cylinder(e0, e1), &[0.25], -mu).unwrap();
        let minus = cylinder_eigenvalue(&cylinder(-e0, -e1), &[0.25], mu).unwrap();
        prop_assert!((plus - minus).abs() <= 1e-10);
    }

    #[test]
    fn eigenvalue_is_convex_in_mu(m1 in -3.0f64..3.0, m2 in -3.0f64..3.0, e1 in -1.0f64..1.0) {
        let k = cylinder(0.2, e1);
        let l = |m: f64| cylinder_eigenvalue(&k, &[0.25], m).unwrap();
        let mid = l(0.5 * (m1 + m2));
        prop_assert!(mid <= 0.5 * (l(m1) + l(m2)) + 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Principal periodic eigenvalue

fn fourier(coeffs: &[(f64, f64)], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = std::f64::consts::TAU * i as f64 / n as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| a * ((k + 1) as f64 * x).cos() + b * ((k + 1) as f64 * x).sin())
                .sum()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lambda1_lies_between_mean_and_max_potential(
        c in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..4),
        eps in 0.0f64..0.5,
    ) {
        let m = PeriodicMedium::cosine(1.0, eps, 2.0).with_samples(128);
        let v = fourier(&c, 128);
        let l = lambda1(&v, &m, |u| u).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(l.lambda >= mean - 1e-9 && l.lambda <= max + 1e-9, "{} not in [{mean}, {max}]", l.lambda);
        let norm = l.eigenfunction.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        prop_assert!(l.residual <= 1e-8 * norm.max(1.0));
        prop_assert!(l.eigenfunction.iter().all(|p| *p > 0.0) || l.eigenfunction.iter().all(|p| *p < 0.0));
    }

    #[test]
    fn lambda1_is_monotone_in_the_potential(
        c in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..4),
        bump in prop::collection::vec(0.0f64..0.3, 128),
    ) {
        let m = PeriodicMedium::cosine(1.0, 0.2, 2.0).with_samples(128);
        let v = fourier(&c, 128);
        let w: Vec<f64> = v.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let lv = lambda1(&v, &m, |u| u).unwrap().lambda;
        let lw = lambda1(&w, &m, |u| u).unwrap().lambda;
        prop_assert!(lw >= lv - 1e-10);
    }

    #[test]
    fn lambda1_is_shift_invariant_in_a_constant_medium(
        c in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..4),
        s in 0usize..128,
    ) {
        let m = PeriodicMedium::constant(1.0, 2.0).with_samples(128);
        let v = fourier(&c, 128);
        let a = lambda1(&v, &m, |u| u).unwrap().lambda;
        let b = lambda1(&cell_translate(&v, s), &m, |u| u).unwrap().lambda;
        prop_assert!((a - b).abs() <= 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Config

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swept_values_reach_the_parsed_config(a in 0.01f64..0.99, h in 1u32..500) {
        let text = "[system]\nfamily = \"reaction_diffusion\"\nreaction = { name = \"cubic\", a = 0.5 }\n[wave]\nk_max = 10\n";
        let mut raw = config::parse_str(text).unwrap().raw;
        config::set_path(&mut raw, "system.reaction.a", a).unwrap();
        config::set_path(&mut raw, "wave.k_max", h as f64).unwrap();
        let c = config::parse_value(raw).unwrap();
        prop_assert_eq!(c.system.reaction, Some(Reaction::Cubic { a }));
        prop_assert_eq!(c.wave.k_max, h as usize);
    }
}
