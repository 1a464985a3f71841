use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddsolve::fem::{assemble_residual, h1_seminorm};
use ddsolve::harness::{contraction_factor, read_trace_csv, ExperimentConfig};
use ddsolve::problems::{laplace, semilinear_reaction, ProblemDef, Source};
use ddsolve::steklov::apply_s;
use ddsolve::{
    build_rect_mesh, decompose_vertical, run, DdSetup, Discretization, IterationParams,
    InterfaceVector, LaplaceOperators, Mesh, MethodKind, NewtonConfig, SolveCounter, SparseSystem,
    Subdomain,
};

fn residual(problem: &ProblemDef, disc: &Discretization, eta: &[f64]) -> Vec<f64> {
    apply_s(problem, disc, &InterfaceVector(eta.to_vec()), &NewtonConfig::default(), [None, None], &SolveCounter::new(), false)
        .unwrap()
        .residual
        .into_inner()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn energy(ops: &LaplaceOperators, s: Subdomain, v: &[f64]) -> f64 {
    dot(&ops.apply_sp(s, &InterfaceVector(v.to_vec())).unwrap(), v)
}

fn scaled_to_unit_ball(ops: &LaplaceOperators, rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = ops.p_energy_norm(&InterfaceVector(v.clone())).unwrap();
    let r: f64 = rng.gen_range(0.05..1.0);
    v.iter().map(|x| x * r / norm).collect()
}

#[test]
fn uniform_monotonicity_constant_is_mesh_stable() {
    let problem = semilinear_reaction();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut constants = Vec::new();
    for h in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
        let disc = Discretization::vertical(3.0, 2.0, h, 1.5).unwrap();
        let ops = LaplaceOperators::new(&disc).unwrap();
        let m = disc.decomp.interface_len();
        let mut c = f64::INFINITY;
        for _ in 0..50 {
            let eta = scaled_to_unit_ball(&ops, &mut rng, m);
            let mu = scaled_to_unit_ball(&ops, &mut rng, m);
            let d = diff(&eta, &mu);
            let pairing = dot(&diff(&residual(&problem, &disc, &eta), &residual(&problem, &disc, &mu)), &d);
            let norm2 = ops.p_energy_norm(&InterfaceVector(d)).unwrap().powi(2);
            c = c.min(pairing / norm2);
        }
        // monotone reaction plus minimal harmonic energy gives c >= 1
        assert!(c >= 1.0 - 1e-9, "h={h}: c={c}");
        constants.push(c);
    }
    let (lo, hi) = constants.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    assert!(hi / lo < 2.0, "{constants:?}");
}

#[test]
fn harmonic_and_zero_extensions_give_the_same_residual() {
    let disc = Discretization::vertical(1.0, 1.0, 0.125, 0.5).unwrap();
    let ops = LaplaceOperators::new(&disc).unwrap();
    let m = disc.decomp.interface_len();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for problem in [semilinear_reaction(), laplace()] {
        let eta: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ev = apply_s(&problem, &disc, &InterfaceVector(eta), &NewtonConfig::default(), [None, None], &SolveCounter::new(), false)
            .unwrap();
        let mut harmonic = vec![0.0; m];
        for s in Subdomain::BOTH {
            let r = assemble_residual(&problem, &disc.mesh, disc.decomp.local_dofs(s), &disc.rule, &ev.fields[s.index()]).unwrap();
            for (k, slot) in harmonic.iter_mut().enumerate() {
                let mut e = vec![0.0; m];
                e[k] = 1.0;
                *slot += dot(&r, &ops.harmonic_extension(s, &InterfaceVector(e)).unwrap());
            }
        }
        for k in 0..m {
            assert!((harmonic[k] - ev.residual[k]).abs() < 1e-10);
        }
    }
}

#[test]
fn classical_scaling_for_the_linear_problem() {
    let params = IterationParams {
        stop_tol: 0.0,
        max_outer: 6,
        ..IterationParams::with_step(0.25)
    };
    let sym = DdSetup::new(laplace(), Discretization::vertical(3.0, 2.0, 0.125, 1.5).unwrap(), NewtonConfig::default()).unwrap();
    let e = run(MethodKind::Mnn1, &sym, &params, &sym.zero_interface()).unwrap().errors();
    // mirror-symmetric halves: one step lands on the solution
    assert!(e[1] < 1e-10, "{e:?}");

    let mesh = build_rect_mesh(3.0, 2.0, 0.125).unwrap();
    let decomp = ddsolve::decompose_l_shaped(&mesh, 1.0, 2.0, 1.0).unwrap();
    let l = DdSetup::new(laplace(), Discretization::new(mesh, decomp), NewtonConfig::default()).unwrap();
    let e = run(MethodKind::Mnn1, &l, &params, &l.zero_interface()).unwrap().errors();
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}

#[test]
fn dirichlet_solution_energy_bounds() {
    let disc = Discretization::vertical(3.0, 2.0, 0.125, 1.5).unwrap();
    let ops = LaplaceOperators::new(&disc).unwrap();
    let problem = semilinear_reaction();
    let m = disc.decomp.interface_len();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = NewtonConfig::default();
    let counter = SolveCounter::new();
    for _ in 0..6 {
        let eta: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let fe = apply_s(&problem, &disc, &InterfaceVector(eta.clone()), &cfg, [None, None], &counter, false).unwrap();
        let fm = apply_s(&problem, &disc, &InterfaceVector(mu.clone()), &cfg, [None, None], &counter, false).unwrap();
        let d = diff(&eta, &mu);
        for s in Subdomain::BOTH {
            let i = s.index();
            let du = diff(&fe.fields[i], &fm.fields[i]);
            let semi = h1_seminorm(&disc.mesh, disc.decomp.local_dofs(s), &du).unwrap();
            // the discrete harmonic extension has the least energy among extensions of d
            assert!(semi * semi >= energy(&ops, s, &d) * (1.0 - 1e-9));
        }
    }
}

#[test]
fn residual_ignores_the_choice_of_extension() {
    let disc = Discretization::vertical(3.0, 2.0, 0.25, 1.5).unwrap();
    let problem = semilinear_reaction();
    let m = disc.decomp.interface_len();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let eta: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ev = apply_s(&problem, &disc, &InterfaceVector(eta), &NewtonConfig::default(), [None, None], &SolveCounter::new(), false)
        .unwrap();
    let mut by_zero = vec![0.0; m];
    let mut random_ext = vec![0.0; m];
    for s in Subdomain::BOTH {
        let dofs = disc.decomp.local_dofs(s);
        let r = assemble_residual(&problem, &disc.mesh, dofs, &disc.rule, &ev.fields[s.index()]).unwrap();
        let n_int = disc.decomp.interior_len(s);
        for k in 0..m {
            by_zero[k] += r[n_int + k];
            let ext: f64 = (0..n_int).map(|j| r[j] * rng.gen_range(-5.0..5.0)).sum();
            random_ext[k] += r[n_int + k] + ext;
        }
    }
    let scale = by_zero.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for k in 0..m {
        assert!((by_zero[k] - ev.residual[k]).abs() < 1e-12 * (1.0 + scale));
        assert!((random_ext[k] - by_zero[k]).abs() < 1e-8);
    }
}

#[test]
fn methods_coincide_for_the_linear_problem() {
    let disc = Discretization::vertical(3.0, 2.0, 0.25, 1.5).unwrap();
    let setup = DdSetup::new(laplace(), disc, NewtonConfig::default()).unwrap();
    let params = IterationParams {
        stop_tol: 0.0,
        max_outer: 8,
        ..IterationParams::with_step(0.2)
    };
    let eta0 = setup.zero_interface();
    let traces: Vec<_> = MethodKind::ALL
        .iter()
        .map(|&m| run(m, &setup, &params, &eta0).unwrap())
        .collect();
    for t in &traces[1..] {
        for (a, b) in traces[0].errors().iter().zip(t.errors()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn reference_contraction_for_symmetric_linear_split() {
    let disc = Discretization::vertical(3.0, 2.0, 0.125, 1.5).unwrap();
    let setup = DdSetup::new(laplace(), disc, NewtonConfig::default()).unwrap();
    let params = IterationParams {
        stop_tol: 0.0,
        max_outer: 8,
        ..IterationParams::with_step(0.19)
    };
    let trace = run(MethodKind::Mnn1, &setup, &params, &setup.zero_interface()).unwrap();
    // mirror-symmetric halves make S_1 = S_2, so the error map is (1 - 4 s) I
    let c = contraction_factor(&trace.errors()).unwrap();
    assert!((c - 0.24).abs() < 1e-6, "{c}");
}

fn small_disc() -> impl Strategy<Value = (usize, usize, usize)> {
    (2usize..7, 1usize..6).prop_flat_map(|(nx, ny)| (Just(nx), Just(ny), 1..nx))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn meshes_tile_the_rectangle((nx, ny, _) in small_disc(), h in prop::sample::select(vec![0.25, 0.5, 1.0])) {
        let (w, ht) = (nx as f64 * h, ny as f64 * h);
        let mesh = build_rect_mesh(w, ht, h).unwrap();
        prop_assert_eq!(mesh.num_triangles(), 2 * nx * ny);
        let area: f64 = (0..mesh.num_triangles()).map(|t| mesh.area(t)).sum();
        prop_assert!((area - w * ht).abs() < 1e-12);
        prop_assert!(mesh.validate().is_ok());
    }

    #[test]
    fn trace_inverts_extension((nx, ny, split) in small_disc(), seed in any::<u64>()) {
        let ny = ny + 1;
        let mesh = build_rect_mesh(nx as f64, ny as f64, 1.0).unwrap();
        let decomp = decompose_vertical(&mesh, split as f64).unwrap();
        prop_assert_eq!(decomp.interface_len(), ny - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta = InterfaceVector((0..ny - 1).map(|_| rng.gen_range(-1.0..1.0)).collect());
        for s in Subdomain::BOTH {
            let ext = decomp.extension_by_zero(s, &eta).unwrap();
            prop_assert_eq!(&decomp.trace(s, &ext).unwrap(), &eta);
            prop_assert_eq!(ext.len(), decomp.interior_len(s) + decomp.interface_len());
        }
    }

    #[test]
    fn laplace_steklov_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let disc = Discretization::vertical(3.0, 2.0, 0.5, 1.5).unwrap();
        let problem = laplace().with_source(Source::Zero);
        let m = disc.decomp.interface_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = eta.iter().zip(&mu).map(|(x, y)| a * x + b * y).collect();
        let (se, sm, sc) = (residual(&problem, &disc, &eta), residual(&problem, &disc, &mu), residual(&problem, &disc, &comb));
        for k in 0..m {
            prop_assert!((sc[k] - (a * se[k] + b * sm[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn semilinear_steklov_is_monotone(seed in any::<u64>(), scale in 0.01f64..10.0) {
        let disc = Discretization::vertical(3.0, 2.0, 0.5, 1.5).unwrap();
        let problem = semilinear_reaction();
        let m = disc.decomp.interface_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta: Vec<f64> = (0..m).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let mu: Vec<f64> = (0..m).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let pairing = dot(&diff(&residual(&problem, &disc, &eta), &residual(&problem, &disc, &mu)), &diff(&eta, &mu));
        prop_assert!(pairing > 0.0);
    }

    #[test]
    fn compress_preserves_products(entries in prop::collection::vec((0usize..6, 0usize..6, -5.0f64..5.0), 0..40),
                                   x in prop::collection::vec(-2.0f64..2.0, 6)) {
        let mut sys = SparseSystem::new(6);
        for &(r, c, v) in &entries {
            sys.push(r, c, v);
        }
        let before = sys.matvec(&x);
        let before_t = sys.transpose_matvec(&x);
        sys.compress();
        let mut seen = std::collections::HashSet::new();
        prop_assert!(sys.entries.iter().all(|&(r, c, _)| seen.insert((r, c))));
        for (a, b) in sys.matvec(&x).iter().zip(&before).chain(sys.transpose_matvec(&x).iter().zip(&before_t)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_decay_recovers_its_ratio(r in 0.01f64..0.99, n in 6usize..30) {
        let e: Vec<f64> = (0..=n).map(|k| 0.7 * r.powi(k as i32)).collect();
        let c = contraction_factor(&e).unwrap();
        prop_assert!((c - r).abs() < 1e-9 * (1.0 + r));
    }

    #[test]
    fn config_parser_never_panics(text in "\\PC{0,200}") {
        let _ = ExperimentConfig::from_kv(&text);
    }

    #[test]
    fn dump_parser_never_panics(text in "[a-z0-9 .\\-\\n#]{0,200}") {
        let _ = Mesh::parse_dump(&text);
    }

    #[test]
    fn trace_reader_never_panics(text in "[a-z0-9_,.\\-e\\n]{0,200}") {
        let _ = read_trace_csv(text.as_bytes());
    }
}
