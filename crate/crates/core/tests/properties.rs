use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use logsob_core::functionals::{deficit_corollary2, deficit_theorem1, to_density, to_gaussian_form};
use logsob_core::linalg::{sym_eigenvalues, vector_from_slice};
use logsob_core::meshio::{parse_mesh, to_json, MeshFormat};
use logsob_core::operators::{divergence, gradient, integrate, normal_part, tangential_part};
use logsob_core::sparse::{assemble_weighted_laplacian, solve_mean_zero, SolveOptions};
use logsob_core::{build_geometry_cache, generate_shape, sym_det, sym_eig_min, GeometryCache, ShapeSpec, TangentMatrix, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixtures() -> &'static Vec<(&'static str, GeometryCache)> {
    static CELL: OnceLock<Vec<(&'static str, GeometryCache)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let specs = [
            ("circle", ShapeSpec::circle(1.3, 48)),
            ("sphere", ShapeSpec::sphere(1.0, 162).with_center(&[0.5, -0.2, 0.1])),
            ("torus", ShapeSpec::torus(2.0, 0.7, [16, 8])),
            ("clifford", ShapeSpec::clifford(SQRT_2, SQRT_2, [12, 12])),
            ("disjoint", ShapeSpec::disjoint(ShapeSpec::circle(1.0, 16), ShapeSpec::circle(0.5, 20).with_center(&[4.0, 0.0]))),
        ];
        specs.into_iter().map(|(name, s)| (name, build_geometry_cache(&generate_shape(&s).unwrap()).unwrap())).collect()
    })
}

fn random_scalar(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.2..3.0)).collect()
}

fn random_field(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vector> {
    (0..n).map(|_| vector_from_slice(&random_scalar(rng, dim))).collect()
}

fn wdot(c: &GeometryCache, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(c.dual_measure()).map(|((x, y), w)| x * y * w).sum()
}

fn dense_symmetric_eigenvalues(c: &GeometryCache, f: &[f64]) -> Vec<f64> {
    let l = assemble_weighted_laplacian(c, f).unwrap().to_dense();
    let mut ev: Vec<f64> = (-l).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergence_is_negative_adjoint_of_gradient(seed in any::<u64>(), k in 0usize..5) {
        let (name, c) = &fixtures()[k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_scalar(&mut rng, c.num_vertices());
        let v = random_field(&mut rng, c.num_vertices(), c.ambient_dim());
        let lhs = wdot(c, &f, &divergence(c, &v));
        let g = gradient(c, &f);
        let rhs: f64 = (0..c.num_vertices()).map(|i| c.dual_measure()[i] * v[i].dot(&g[i])).sum();
        let scale: f64 = (0..c.num_vertices()).map(|i| c.dual_measure()[i] * v[i].norm() * g[i].norm().max(f[i].abs())).sum();
        prop_assert!((lhs + rhs).abs() <= 1e-10 * (1.0 + scale), "{name}: {lhs} vs {rhs}");
    }

    #[test]
    fn projections_split_fields(seed in any::<u64>(), k in 0usize..5) {
        let (_, c) = &fixtures()[k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_field(&mut rng, c.num_vertices(), c.ambient_dim());
        let t = tangential_part(c, &v);
        let tt = tangential_part(c, &t);
        let nn = normal_part(c, &v);
        for i in 0..v.len() {
            let scale = v[i].norm();
            prop_assert!((tt[i] - t[i]).norm() <= 4.0 * f64::EPSILON * scale);
            prop_assert!((t[i] + nn[i] - v[i]).norm() <= 4.0 * f64::EPSILON * scale);
            prop_assert!(t[i].dot(&nn[i]).abs() <= 1e-12 * scale * scale);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes(value in -1e3f64..1e3, k in 0usize..5) {
        let (_, c) = &fixtures()[k];
        let g = gradient(c, &vec![value; c.num_vertices()]);
        prop_assert!(g.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn weighted_laplacian_is_negative_semidefinite(seed in any::<u64>(), k in 0usize..5) {
        let (_, c) = &fixtures()[k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_positive(&mut rng, c.num_vertices());
        let u = random_scalar(&mut rng, c.num_vertices());
        let l = assemble_weighted_laplacian(c, &f).unwrap();
        let lu = l.mul_vec(&u);
        let quad: f64 = u.iter().zip(&lu).map(|(a, b)| a * b).sum();
        let scale: f64 = (0..l.dim()).map(|r| l.get(r, r).abs()).sum();
        prop_assert!(quad <= 1e-10 * scale);
        let ones = l.mul_vec(&vec![1.0; c.num_vertices()]);
        prop_assert!(ones.iter().all(|x| x.abs() <= 1e-12 * scale));
        prop_assert!(l.asymmetry() <= 1e-12 * scale);
    }

    #[test]
    fn tighter_resolve_moves_solution_little(seed in any::<u64>(), k in 0usize..5) {
        let (_, c) = &fixtures()[k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_positive(&mut rng, c.num_vertices());
        let l = assemble_weighted_laplacian(c, &f).unwrap();
        let mut rhs = random_scalar(&mut rng, c.num_vertices());
        let labels = c.component_labels();
        for comp in 0..c.num_components() {
            let idx: Vec<usize> = (0..rhs.len()).filter(|&i| labels[i] == comp).collect();
            let mean = idx.iter().map(|&i| rhs[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().for_each(|&i| rhs[i] -= mean);
        }
        let tol = 1e-8;
        let (u1, r1) = solve_mean_zero(&l, &rhs, c.dual_measure(), labels, SolveOptions { tol, max_iterations: None }).unwrap();
        let (u2, _) = solve_mean_zero(&l, &rhs, c.dual_measure(), labels, SolveOptions { tol: tol / 10.0, max_iterations: None }).unwrap();
        prop_assert!(r1.relative_residual <= tol);
        let diff: f64 = u1.iter().zip(&u2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = u2.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(diff <= 10.0 * tol * norm.max(1.0), "{diff} vs {norm}");
    }

    #[test]
    fn deficit_is_positively_homogeneous(seed in any::<u64>(), scale in 0.01f64..100.0, k in 0usize..5) {
        let (_, c) = &fixtures()[k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_positive(&mut rng, c.num_vertices());
        let a = deficit_theorem1(c, &f).unwrap().deficit;
        let scaled: Vec<f64> = f.iter().map(|v| v * scale).collect();
        let b = deficit_theorem1(c, &scaled).unwrap().deficit;
        prop_assert!((b - scale * a).abs() <= 1e-10 * scale * (1.0 + a.abs()));
    }

    #[test]
    fn gaussian_form_round_trip(seed in any::<u64>(), k in 0usize..5) {
        let (_, c) = &fixtures()[k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_positive(&mut rng, c.num_vertices());
        let back = to_density(c, &to_gaussian_form(c, &f).unwrap()).unwrap();
        prop_assert!(f.iter().zip(&back).all(|(a, b)| (a - b).abs() <= 1e-14 * a));
        let t1 = deficit_theorem1(c, &f).unwrap();
        let c2 = deficit_corollary2(c, &to_gaussian_form(c, &f).unwrap()).unwrap();
        prop_assert!((t1.mass - c2.mass).abs() <= 1e-12 * t1.mass);
        prop_assert!((t1.mass - integrate(c, &f)).abs() <= 1e-12 * t1.mass);
    }

    #[test]
    fn eigenvalues_match_characteristic_roots(a in -10.0f64..10.0, b in -10.0f64..10.0, d in -10.0f64..10.0) {
        let m = TangentMatrix::from_rows(&[&[a, b], &[b, d]]);
        let (lo, hi) = sym_eigenvalues(&m);
        for l in [lo, hi] {
            let p = (a - l) * (d - l) - b * b;
            prop_assert!(p.abs() <= 1e-10 * (1.0 + a.abs() + b.abs() + d.abs()).powi(2));
        }
        prop_assert!(lo <= hi);
        prop_assert_eq!(sym_eig_min(&m), lo);
        prop_assert!((sym_det(&m) - lo * hi).abs() <= 1e-10 * (1.0 + lo.abs() * hi.abs()));
    }

    #[test]
    fn json_mesh_round_trip_is_exact(k in 0usize..5) {
        let (_, c) = &fixtures()[k];
        let spec_mesh = match k {
            0 => ShapeSpec::circle(1.3, 48),
            1 => ShapeSpec::sphere(1.0, 162).with_center(&[0.5, -0.2, 0.1]),
            2 => ShapeSpec::torus(2.0, 0.7, [16, 8]),
            3 => ShapeSpec::clifford(SQRT_2, SQRT_2, [12, 12]),
            _ => ShapeSpec::disjoint(ShapeSpec::circle(1.0, 16), ShapeSpec::circle(0.5, 20).with_center(&[4.0, 0.0])),
        };
        let mesh = generate_shape(&spec_mesh).unwrap();
        let back = parse_mesh(&to_json(&mesh), MeshFormat::Json).unwrap();
        prop_assert_eq!(back.vertices(), mesh.vertices());
        prop_assert_eq!(back.cell_lists(), mesh.cell_lists());
        prop_assert_eq!(back.num_components(), c.num_components());
    }
}

#[test]
fn laplacian_kernel_matches_component_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, c) in fixtures() {
        if c.num_vertices() > 200 {
            continue;
        }
        let f = random_positive(&mut rng, c.num_vertices());
        let ev = dense_symmetric_eigenvalues(c, &f);
        let top = ev.last().copied().unwrap();
        let zeros = ev.iter().filter(|e| e.abs() <= 1e-10 * top).count();
        assert!(ev.iter().all(|e| *e >= -1e-10 * top), "{name}");
        assert_eq!(zeros, c.num_components(), "{name}: {:?}", &ev[..4]);
    }
}

#[test]
fn random_density_circle_spectrum_has_single_zero() {
    let c = build_geometry_cache(&generate_shape(&ShapeSpec::circle(1.0, 64)).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let f = random_positive(&mut rng, 64);
        let ev = dense_symmetric_eigenvalues(&c, &f);
        let top = ev[63];
        assert!(ev[0].abs() <= 1e-12 * top);
        assert!(ev[1] > 1e-6 * top);
    }
}

#[test]
fn jacobian_inequality_on_random_psd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let l = rng.random_range(0.0..6.0);
        let m = TangentMatrix::from_rows(&[&[l]]);
        assert!(sym_det(&m) <= (m.trace() - 1.0).exp() * (1.0 + 1e-15));
        let (x, y, z): (f64, f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        // B Bᵀ with B = [[x, 0], [y, z]]
        let m = TangentMatrix::from_rows(&[&[x * x, x * y], &[x * y, y * y + z * z]]);
        assert!(sym_det(&m) <= (m.trace() - 2.0).exp() * (1.0 + 1e-15));
    }
    for n in 1..=2 {
        let id = TangentMatrix::identity(n);
        assert!((sym_det(&id) - (id.trace() - n as f64).exp()).abs() <= 1e-12);
    }
}
