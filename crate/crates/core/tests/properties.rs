use deco_core::datagen::{generate, ModelKind, ModelSpec};
use deco_core::deco::{partition_columns, Partition};
use deco_core::eval::compute_metrics;
use deco_core::lasso::{
    cd_fit, fit_path, kkt_check, lambda_max, objective, soft_threshold, CdOptions, CdSolver, LassoProblem,
    PathOptions,
};
use deco_core::linalg::{center_scale, dot, ridge_solve, spd_inv_sqrt, sym_eig, Matrix};
use deco_core::rng::{Stage, Stream};
use proptest::prelude::*;

fn gaussian(n: usize, p: usize, seed: u64) -> Matrix {
    let mut s = Stream::new(seed, Stage::Misc, 7);
    Matrix::from_fn(n, p, |_, _| s.normal())
}

fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let b = gaussian(n, n, seed);
    Matrix::from_fn(n, n, |i, j| b.get(i, j) + b.get(j, i))
}

/// Gaussian design with a sparse signal and noise.
fn lasso_instance(n: usize, q: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let x = gaussian(n, q, seed);
    let mut s = Stream::new(seed, Stage::Noise, 0);
    let k = q.min(3);
    let y = (0..n)
        .map(|i| (0..k).map(|j| (j as f64 + 1.0) * x.get(i, j)).sum::<f64>() + s.normal())
        .collect();
    (x, y)
}

/// `√n Q` with `Q` having orthonormal columns, so `XᵀX / n = I`.
fn orthonormal_design(n: usize, q: usize, seed: u64) -> Matrix {
    let eig = sym_eig(&random_symmetric(n, seed)).unwrap();
    let mut x = eig.vectors.select_columns(&(0..q).collect::<Vec<_>>());
    x.scale((n as f64).sqrt());
    x
}

#[test]
fn sym_eig_invariants_at_200() {
    let a = random_symmetric(200, 99);
    let eig = sym_eig(&a).unwrap();
    assert!(eig.orthonormality_error() <= 1e-10);
    assert!(eig.reconstruct().max_abs_diff(&a) <= 1e-9 * (1.0 + a.max_abs()));
    assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn soft_threshold_oracle_on_orthonormal_designs() {
    for seed in 0..20 {
        let (n, q) = (30, 12);
        let x = orthonormal_design(n, q, seed);
        let y = gaussian(n, 1, seed + 1000).into_data();
        let z = x.t_matvec(&y).unwrap();
        let lambda = 0.2 * lambda_max(&x, &y).unwrap() * (1.0 + (seed % 4) as f64);
        let beta = cd_fit(&LassoProblem { x: &x, y: &y, lambda }, None).unwrap();
        for j in 0..q {
            let expect = soft_threshold(z[j] / n as f64, lambda);
            assert!((beta[j] - expect).abs() <= 1e-8, "seed {seed} coord {j}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sym_eig_invariants(n in 1usize..40, seed in any::<u64>()) {
        let a = random_symmetric(n, seed);
        let eig = sym_eig(&a).unwrap();
        prop_assert!(eig.orthonormality_error() <= 1e-10);
        prop_assert!(eig.reconstruct().max_abs_diff(&a) <= 1e-9 * (1.0 + a.max_abs()));
    }

    #[test]
    fn inv_sqrt_round_trip(n in 2usize..20, k in 1usize..40, r1 in 0.05f64..20.0, p in 1usize..5000, seed in any::<u64>()) {
        let b = gaussian(n, k, seed);
        let f = b.row_gram();
        let fbar = spd_inv_sqrt(&f, r1, p).unwrap();
        prop_assert!(fbar.asymmetry() <= 1e-10);
        let mut shifted = f.clone();
        shifted.add_diag(r1);
        let back = fbar.matmul(&shifted).unwrap().matmul(&fbar).unwrap();
        let pf = p as f64;
        prop_assert!(back.max_abs_diff(&Matrix::from_diag(&vec![pf; n])) <= 1e-8 * pf);
    }

    #[test]
    fn ridge_normal_equations(n in 2usize..40, q in 1usize..30, r2 in 1e-4f64..1e3, seed in any::<u64>()) {
        let x = gaussian(n, q, seed);
        let y = gaussian(n, 1, seed ^ 1).into_data();
        let beta = ridge_solve(&x, &y, r2).unwrap();
        let xty = x.t_matvec(&y).unwrap();
        let mut g = x.col_gram();
        g.add_diag(r2);
        let lhs = g.matvec(&beta).unwrap();
        let resid: f64 = lhs.iter().zip(&xty).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(resid <= 1e-8 * dot(&xty, &xty).sqrt().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn center_without_scaling_is_idempotent(n in 2usize..30, p in 1usize..10, seed in any::<u64>()) {
        let x = gaussian(n, p, seed);
        let y = gaussian(n, 1, seed ^ 2).into_data();
        let once = center_scale(&x, &y, false).unwrap();
        let twice = center_scale(&once.x, &once.y, false).unwrap();
        prop_assert!(twice.x.max_abs_diff(&once.x) <= 1e-12);
        for (a, b) in twice.y.iter().zip(&once.y) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn cd_fit_satisfies_kkt(n in 5usize..60, q in 1usize..120, frac in 0.001f64..1.0, seed in any::<u64>()) {
        let (x, y) = lasso_instance(n, q, seed);
        let lambda = frac * lambda_max(&x, &y).unwrap();
        let beta = cd_fit(&LassoProblem { x: &x, y: &y, lambda }, None).unwrap();
        let kkt = kkt_check(&x, &y, &beta, lambda, 1e-6);
        prop_assert!(kkt.pass, "violation {}", kkt.max_violation);
    }

    #[test]
    fn sweeps_never_increase_objective(n in 5usize..40, q in 1usize..60, frac in 0.01f64..1.0, seed in any::<u64>()) {
        let (x, y) = lasso_instance(n, q, seed);
        let lambda = frac * lambda_max(&x, &y).unwrap();
        let solver = CdSolver::new(&x, &y, CdOptions::default()).unwrap();
        let mut state = solver.state(None).unwrap();
        let mut prev = objective(&x, &y, &state.beta, lambda);
        for _ in 0..25 {
            solver.full_sweep(lambda, &mut state);
            let now = objective(&x, &y, &state.beta, lambda);
            prop_assert!(now <= prev + 1e-12 * (1.0 + prev.abs()));
            prev = now;
        }
    }

    #[test]
    fn response_scaling_scales_solution(n in 5usize..40, q in 1usize..50, c in 0.1f64..10.0, seed in any::<u64>()) {
        let (x, y) = lasso_instance(n, q, seed);
        let lambda = 0.3 * lambda_max(&x, &y).unwrap();
        let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
        let base = cd_fit(&LassoProblem { x: &x, y: &y, lambda }, None).unwrap();
        let scaled = cd_fit(&LassoProblem { x: &x, y: &cy, lambda: c * lambda }, None).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((c * a - b).abs() <= 1e-8 * (1.0 + c * a.abs()));
        }
    }

    #[test]
    fn path_starts_at_zero_and_lambdas_decrease(n in 5usize..40, q in 2usize..60, seed in any::<u64>()) {
        let (x, y) = lasso_instance(n, q, seed);
        let path = fit_path(&x, &y, &PathOptions { n_lambda: 20, ..PathOptions::default() }).unwrap();
        prop_assert!(path.betas[0].iter().all(|&b| b == 0.0));
        prop_assert!(path.lambdas.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn metrics_are_permutation_equivariant(p in 1usize..30, seed in any::<u64>()) {
        let mut s = Stream::new(seed, Stage::Misc, 0);
        let truth: Vec<f64> = (0..p).map(|_| if s.bernoulli(0.3) { s.normal() } else { 0.0 }).collect();
        let est: Vec<f64> = (0..p).map(|_| if s.bernoulli(0.4) { s.normal() } else { 0.0 }).collect();
        let mut perm: Vec<usize> = (0..p).collect();
        s.shuffle(&mut perm);
        let pt: Vec<f64> = perm.iter().map(|&j| truth[j]).collect();
        let pe: Vec<f64> = perm.iter().map(|&j| est[j]).collect();
        let a = compute_metrics(&est, &truth).unwrap();
        let b = compute_metrics(&pe, &pt).unwrap();
        prop_assert_eq!((a.fp, a.fn_, a.sign_consistent), (b.fp, b.fn_, b.sign_consistent));
        prop_assert!((a.mse - b.mse).abs() <= 1e-12 * (1.0 + a.mse));
    }

    #[test]
    fn partitions_cover_columns_once(p in 1usize..300, m_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let m = 1 + ((p - 1) as f64 * m_frac) as usize;
        let part = partition_columns(p, m, seed).unwrap();
        prop_assert_eq!(part.m(), m);
        let mut seen = vec![false; p];
        for g in part.groups() {
            prop_assert!(!g.is_empty());
            for &j in g {
                prop_assert!(!seen[j]);
                seen[j] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        prop_assert_eq!(Partition::from_text(&part.to_text()).unwrap(), part);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generation_is_deterministic(kind in 0usize..5, seed in any::<u64>()) {
        let kind = [
            ModelKind::Independent,
            ModelKind::CompoundSymmetry,
            ModelKind::Group,
            ModelKind::Factor,
            ModelKind::L1Ball,
        ][kind];
        let spec = ModelSpec::new(kind, 30, 40, seed);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        prop_assert_eq!(a.x, b.x);
        prop_assert_eq!(a.y, b.y);
        prop_assert_eq!(a.beta_true, b.beta_true);
    }
}
