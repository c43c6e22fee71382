use meshmotion::ext::*;
use meshmotion::fem::SparseSystem;
use meshmotion::field::{node_coords, Field, Space};
use meshmotion::mesh::{channel_flap_mesh, rectangle_mesh, BenchmarkGeometry, MeshSizing, TriMesh};
use meshmotion::quality::min_det_gradient;
use nalgebra::{DMatrix, DVector};

fn small_mesh() -> TriMesh<f64> {
    rectangle_mesh([0.0, 0.0], [1.0, 0.6], 4, 3)
}

fn smooth_g(mesh: &TriMesh<f64>) -> BoundaryDisplacement<f64> {
    BoundaryDisplacement::from_fn(mesh, |p| [0.05 * (3.0 * p[0]).sin() * p[1], 0.04 * (p[0] * p[1] * 5.0).cos()])
}

fn dense_solve(sys: &SparseSystem<f64>) -> Vec<f64> {
    let d = sys.matrix.to_dense();
    let n = d.len();
    let a = DMatrix::from_fn(n, n, |i, j| d[i][j]);
    let b = DVector::from_column_slice(&sys.rhs);
    a.lu().solve(&b).expect("dense oracle is nonsingular").as_slice().to_vec()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn boundary_error(mesh: &TriMesh<f64>, u: &Field<f64>, g: &BoundaryDisplacement<f64>) -> f64 {
    let g = g.to_p2(mesh).unwrap();
    g.values
        .iter()
        .fold(0.0, |m, (&n, v)| m.max((u.coefficients[2 * n] - v[0]).abs()).max((u.coefficients[2 * n + 1] - v[1]).abs()))
}

fn operators() -> Vec<ClassicOperator> {
    vec![
        ClassicOperator::Harmonic,
        ClassicOperator::Biharmonic,
        ClassicOperator::PLaplace(PLaplaceConfig { p: 4.0, delta: 1e-10 }),
        ClassicOperator::Elastic(ElasticStiffnessConfig {
            mu_max: 10.0,
            mu_min: 1.0,
            gamma_tag: "top".into(),
        }),
    ]
}

#[test]
fn harmonic_reproduces_affine_fields() {
    let m = small_mesh();
    let f = |p: [f64; 2]| [0.1 + 0.2 * p[0] - 0.05 * p[1], -0.03 + 0.07 * p[0] + 0.11 * p[1]];
    let u = harmonic_extend(&m, &BoundaryDisplacement::from_fn(&m, f)).unwrap();
    for (i, p) in node_coords(&m, Space::P2).into_iter().enumerate() {
        let e = f(p);
        assert!((u.coefficients[2 * i] - e[0]).abs() < 1e-12);
        assert!((u.coefficients[2 * i + 1] - e[1]).abs() < 1e-12);
    }
}

#[test]
fn zero_data_gives_zero_for_every_operator() {
    let m = small_mesh();
    let g = BoundaryDisplacement::zeros(&m);
    for op in operators() {
        let u = op.extend(&m, &g).unwrap();
        assert!(u.coefficients.iter().all(|&x| x == 0.0), "{op:?}");
    }
    let (_, z) = BiharmonicSolver::new(&m).unwrap().solve_mixed(&m, &g).unwrap();
    assert!(z.coefficients.iter().all(|&x| x == 0.0));
}

#[test]
fn harmonic_matches_dense_oracle() {
    let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 3, 3);
    let g = smooth_g(&m);
    let sys = harmonic_system(&m, &g).unwrap();
    assert!(sys.rhs.len() <= 200);
    let dense = dense_solve(&sys);
    let u = harmonic_extend(&m, &g).unwrap();
    assert!(max_diff(&dense, &u.coefficients) < 1e-10);
}

#[test]
fn biharmonic_matches_dense_oracle() {
    let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 3, 2);
    let g = smooth_g(&m);
    let (u, z) = BiharmonicSolver::new(&m).unwrap().solve_mixed(&m, &g).unwrap();
    for c in 0..2 {
        let sys = biharmonic_system(&m, &g, c).unwrap();
        assert!(sys.rhs.len() <= 200);
        let x = dense_solve(&sys);
        let n = x.len() / 2;
        for i in 0..n {
            assert!((x[2 * i] - z.coefficients[2 * i + c]).abs() < 1e-8);
            assert!((x[2 * i + 1] - u.coefficients[2 * i + c]).abs() < 1e-8);
        }
    }
}

#[test]
fn rigid_translation_solves_biharmonic_with_zero_z() {
    let m = small_mesh();
    let g = BoundaryDisplacement::from_fn(&m, |_| [0.3, -0.2]);
    let (u, z) = BiharmonicSolver::new(&m).unwrap().solve_mixed(&m, &g).unwrap();
    for i in 0..u.n_nodes() {
        assert!((u.coefficients[2 * i] - 0.3).abs() < 1e-12 && (u.coefficients[2 * i + 1] + 0.2).abs() < 1e-12);
    }
    assert!(z.coefficients.iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn boundary_exactness_and_translation_equivariance() {
    let m = small_mesh();
    let g = smooth_g(&m);
    let c = [0.013, -0.021];
    let gc = BoundaryDisplacement::from_fn(&m, |_| c).axpy(1.0, &g);
    for op in operators() {
        let u = op.extend(&m, &g).unwrap();
        assert!(boundary_error(&m, &u, &g) <= 1e-12, "{op:?}");
        let uc = op.extend(&m, &gc).unwrap();
        for i in 0..u.n_nodes() {
            for k in 0..2 {
                assert!((uc.coefficients[2 * i + k] - u.coefficients[2 * i + k] - c[k]).abs() < 1e-10, "{op:?}");
            }
        }
    }
}

#[test]
fn linear_operators_are_linear() {
    let m = small_mesh();
    let g1 = smooth_g(&m);
    let g2 = BoundaryDisplacement::from_fn(&m, |p| [p[1] * p[1] * 0.1, -0.05 * p[0]]);
    let a = -1.7;
    for op in [ClassicOperator::Harmonic, ClassicOperator::Biharmonic] {
        let lhs = op.extend(&m, &g2.axpy(a, &g1)).unwrap();
        let rhs = op.extend(&m, &g2).unwrap().axpy(a, &op.extend(&m, &g1).unwrap());
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }
}

#[test]
fn p_laplace_reduces_to_harmonic_for_p_two() {
    let m = small_mesh();
    let g = smooth_g(&m);
    let u2 = p_laplace_extend(&m, &g, 2.0, 1e-10).unwrap();
    let uh = harmonic_extend(&m, &g).unwrap();
    assert!(u2.max_abs_diff(&uh) < 1e-9);
}

#[test]
fn p_laplace_four_has_small_residual() {
    let m = small_mesh();
    let g = smooth_g(&m).scaled(0.2);
    let u = p_laplace_extend(&m, &g, 4.0, 1e-10).unwrap();
    let r = p_laplace_residual(&m, &u, 4.0, 1e-10).unwrap();
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm <= 1e-9, "residual {norm:e}");
    assert!(u.max_abs_diff(&harmonic_extend(&m, &g).unwrap()) > 1e-6);
}

#[test]
fn stiffness_field_bounds() {
    let m = channel_flap_mesh::<f64>(&BenchmarkGeometry::default(), &MeshSizing::coarse());
    let cfg = ElasticStiffnessConfig {
        mu_max: 50.0,
        mu_min: 2.0,
        gamma_tag: "moving".into(),
    };
    let mu = stiffness_field(&m, &cfg).unwrap();
    let (lo, hi) = mu.coefficients.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(lo >= 2.0 - 1e-12 && hi <= 50.0 + 1e-12);
    let flat = ElasticStiffnessConfig { mu_max: 3.0, mu_min: 3.0, ..cfg };
    let mu = stiffness_field(&m, &flat).unwrap();
    assert!(mu.coefficients.iter().all(|x| (x - 3.0).abs() < 1e-12));
}

#[test]
fn incremental_wrapper_contracts() {
    let m = small_mesh();
    let g = smooth_g(&m);
    let op = ClassicOperator::Harmonic;
    let zero = Field::zeros(&m, Space::P2, 2);
    let g0 = BoundaryDisplacement::zeros(&m);
    let direct = op.extend(&m, &g).unwrap();
    let inc = incremental_extend(&op, &m, &zero, &g, &g0).unwrap();
    assert!(inc.max_abs_diff(&direct) < 1e-14);
    let same = incremental_extend(&op, &m, &direct, &g, &g).unwrap();
    assert_eq!(same, direct);

    let half = g.scaled(0.5);
    let u_half = op.extend(&m, &half).unwrap();
    let two_step = incremental_extend(&op, &m, &u_half, &g, &half).unwrap();
    assert!(boundary_error(&m, &two_step, &g) < 1e-10);
    assert!(boundary_error(&m, &direct, &g) < 1e-10);
    assert!(two_step.max_abs_diff(&direct) > 1e-8);

    let mut stepper = Incremental::new(ClassicOperator::Harmonic);
    stepper.step(&m, &half).unwrap();
    let s = stepper.step(&m, &g).unwrap();
    assert!(s.max_abs_diff(&two_step) < 1e-14);
}

#[test]
fn biharmonic_keeps_flap_mesh_valid_longer_than_harmonic() {
    let geo = BenchmarkGeometry::default();
    let m = channel_flap_mesh::<f64>(&geo, &MeshSizing::coarse());
    // flap bending: displacement grows quadratically from the attachment
    let x0 = geo.flap_start();
    let g = BoundaryDisplacement::from_fn(&m, |p| {
        let on_flap = p[0] > x0 - 1e-9 && (p[1] - 0.2).abs() <= 0.01 + 1e-9;
        if on_flap {
            let t = (p[0] - x0) / (0.6 - x0);
            [-0.08 * t * t * t, 0.25 * t * t]
        } else {
            [0.0, 0.0]
        }
    });
    let h = harmonic_extend(&m, &g).unwrap();
    let b = biharmonic_extend(&m, &g).unwrap();
    let qh = meshmotion::quality::scaled_jacobian(&m, &h).unwrap();
    let qb = meshmotion::quality::scaled_jacobian(&m, &b).unwrap();
    assert!(qb.min >= qh.min, "biharmonic {} vs harmonic {}", qb.min, qh.min);
    assert!(min_det_gradient(&m, &b).unwrap() >= min_det_gradient(&m, &h).unwrap());
}
