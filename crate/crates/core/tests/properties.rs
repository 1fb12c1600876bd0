use mflq_core::path::uniform_grid;
use mflq_core::riccati::{
    solve_are_stable_subspace, solve_dre_backward, AreOptions, HamiltonianKind, RiccatiForm,
};
use mflq_core::sim::{
    evaluate_costs, simulate, DecentralizedSocial, Profile, SimConfig, TrajectoryBundle,
};
use mflq_core::stability::{analyze, GoverningTheorem};
use mflq_core::{derived_weights, linalg, synth_social_finite, Gain, ModelParams, TimeFunction};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(n: usize, m: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, n * m).prop_map(move |v| DMatrix::from_row_slice(n, m, &v))
}

/// `LLᵀ` for a random factor `L`.
fn psd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n, -1.5, 1.5).prop_map(move |l| &l * l.transpose())
}

fn system(n: usize) -> impl Strategy<Value = ModelParams> {
    (
        matrix(n, n, -1.5, 1.5),
        matrix(n, 1, -1.5, 1.5),
        matrix(n, n, -0.8, 0.8),
        psd(n),
        matrix(n, n, -0.8, 0.8),
        0.5..2.0f64,
        0.1..1.2f64,
    )
        .prop_map(move |(a, b, g, q, gamma, r, rho)| ModelParams {
            a,
            b,
            g,
            q,
            r: DMatrix::from_element(1, 1, r),
            gamma,
            eta: DVector::from_element(n, 1.0),
            rho,
            f: TimeFunction::constant(&vec![0.5; n]),
            sigma: TimeFunction::constant(&vec![0.1; n]),
            x_bar0: DVector::from_element(n, 1.0),
            init_cov: DMatrix::identity(n, n) * 0.1,
        })
}

fn any_system() -> impl Strategy<Value = ModelParams> {
    prop_oneof![system(1), system(2)]
}

/// Positive root of `(b²/r) p² − (2a − ρ) p − q = 0`.
fn scalar_are_root(a: f64, b: f64, q: f64, r: f64, rho: f64) -> f64 {
    let c = b * b / r;
    let h = 2.0 * a - rho;
    (h + (h * h + 4.0 * c * q).sqrt()) / (2.0 * c)
}

fn rk4<F: Fn(&[DMatrix<f64>]) -> Vec<DMatrix<f64>>>(
    x: &[DMatrix<f64>],
    h: f64,
    rhs: F,
) -> Vec<DMatrix<f64>> {
    let axpy = |x: &[DMatrix<f64>], k: &[DMatrix<f64>], s: f64| -> Vec<DMatrix<f64>> {
        x.iter().zip(k).map(|(a, b)| a + b * s).collect()
    };
    let k1 = rhs(x);
    let k2 = rhs(&axpy(x, &k1, h / 2.0));
    let k3 = rhs(&axpy(x, &k2, h / 2.0));
    let k4 = rhs(&axpy(x, &k3, h));
    (0..x.len())
        .map(|i| &x[i] + (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (h / 6.0))
        .collect()
}

/// `(P, K)` integrated jointly backward from zero, `K` from its own
/// equation rather than as a difference of two Riccati solutions.
fn joint_p_k(p: &ModelParams, grid: &[f64]) -> Vec<DMatrix<f64>> {
    let n = p.n();
    let s = p.s_matrix();
    let q_gamma = derived_weights(p).q_gamma;
    let ag = &p.a + &p.g;
    let rho = p.rho;
    let rhs = |x: &[DMatrix<f64>]| {
        let (pp, k) = (&x[0], &x[1]);
        let dp = pp * rho - (p.a.transpose() * pp + pp * &p.a - pp * &s * pp + &p.q);
        let dk = k * rho
            - (ag.transpose() * k + k * &ag - pp * &s * k - k * &s * pp
                + p.g.transpose() * pp
                + pp * &p.g
                - k * &s * k
                - &q_gamma);
        vec![dp, dk]
    };
    let mut out = vec![DMatrix::zeros(n, n); grid.len()];
    let mut x = vec![DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    for k in (0..grid.len() - 1).rev() {
        x = rk4(&x, grid[k] - grid[k + 1], rhs);
        out[k] = x[1].clone();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_split_q(n in 1usize..4, seed in any::<u64>()) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let l = draw(n, n);
        let mut p = ModelParams::scalar(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        p.a = DMatrix::zeros(n, n);
        p.q = &l * l.transpose();
        p.gamma = draw(n, n);
        p.eta = DVector::from_fn(n, |i, _| i as f64 - 0.5);
        let w = derived_weights(&p);
        let sum = &w.q_hat + &w.q_gamma;
        prop_assert!(linalg::max_abs(&(sum - &p.q)) < 1e-12 * (1.0 + linalg::max_abs(&p.q)));
        let i_minus = DMatrix::identity(n, n) - &p.gamma;
        let expected = i_minus.transpose() * &p.q * &p.eta;
        prop_assert!(linalg::max_abs_vec(&(w.eta_bar - expected)) < 1e-12 * (1.0 + linalg::max_abs(&p.q)));
    }

    #[test]
    fn scalar_subspace_matches_quadratic_root(
        a in -2.0..2.0f64, b in 0.2..2.0f64, q in 0.1..3.0f64, r in 0.2..3.0f64, rho in 0.1..1.5f64,
    ) {
        let p = ModelParams::scalar(a, b, 0.0, q, 0.0, r, 0.0, rho, 0.0, 0.0, 0.0, 0.0);
        let form = RiccatiForm::individual(&p);
        let sol = solve_are_stable_subspace(&form.hamiltonian(HamiltonianKind::M1), AreOptions::default()).unwrap();
        let root = scalar_are_root(a, b, q, r, rho);
        prop_assert!((sol.x[(0, 0)] - root).abs() < 1e-10 * (1.0 + root));
        prop_assert!(sol.rho_stabilizing);
        // closed loop a − b²p/r − ρ/2 = −√Δ/2
        let c = b * b / r;
        let delta = (2.0 * a - rho).powi(2) + 4.0 * c * q;
        prop_assert!((sol.closed_loop[(0, 0)] + delta.sqrt() / 2.0).abs() < 1e-10 * (1.0 + delta.sqrt()));
    }

    #[test]
    fn dre_increases_to_are_with_horizon(
        a in -1.5..1.5f64, b in 0.3..2.0f64, q in 0.1..3.0f64, r in 0.3..3.0f64, rho in 0.2..1.2f64,
    ) {
        let p = ModelParams::scalar(a, b, 0.0, q, 0.0, r, 0.0, rho, 0.0, 0.0, 0.0, 0.0);
        let form = RiccatiForm::individual(&p);
        let root = scalar_are_root(a, b, q, r, rho);
        let mut last = 0.0;
        for t in [0.5, 1.0, 2.0, 4.0, 8.0, 40.0] {
            let grid = uniform_grid(0.0, t, (400.0 * t) as usize);
            let path = solve_dre_backward(&form, DMatrix::zeros(1, 1), &grid, 1e12).unwrap();
            let v = path.initial()[(0, 0)];
            prop_assert!(v >= last - 1e-12, "P_T(0) decreased: {} after {}", v, last);
            prop_assert!(v <= root + 1e-9);
            last = v;
        }
        prop_assert!((last - root).abs() < 1e-6 * (1.0 + root));
    }

    #[test]
    fn finite_k_solves_its_own_equation(p in any_system()) {
        let t_end = 3.0;
        let grid = uniform_grid(0.0, t_end, 3000);
        let Ok(gains) = synth_social_finite(&p, t_end, &grid) else {
            return Ok(());
        };
        let Gain::Varying(k_path) = &gains.k else { panic!("finite gains vary") };
        let oracle = joint_p_k(&p, &grid);
        let scale = 1.0 + oracle.iter().map(linalg::max_abs).fold(0.0, f64::max);
        for (kv, ko) in k_path.values().iter().zip(&oracle) {
            prop_assert!(linalg::max_abs(&(kv - ko)) < 1e-8 * scale);
        }
    }

    #[test]
    fn stable_subspace_reproduces_invariance(p in any_system()) {
        let w = derived_weights(&p);
        let h = mflq_core::riccati::build_hamiltonian(&p, &w, HamiltonianKind::M3).unwrap();
        let Ok(sol) = solve_are_stable_subspace(&h, AreOptions::default()) else {
            return Ok(());
        };
        let n = p.n();
        let stacked = DMatrix::from_fn(2 * n, n, |i, j| if i < n { if i == j { 1.0 } else { 0.0 } } else { -sol.x[(i - n, j)] });
        let f = &sol.factors;
        let l1_inv = f.l1.clone().try_inverse().unwrap();
        let lhs = &h.m * &stacked;
        let rhs = &stacked * (&f.l1 * &f.h11 * l1_inv);
        let scale = 1.0 + linalg::max_abs(&h.m) * (1.0 + linalg::max_abs(&sol.x)).powi(2);
        prop_assert!(linalg::max_abs(&(lhs - rhs)) < 1e-8 * scale);
    }

    #[test]
    fn stabilization_conditions_agree_under_premise(p in any_system()) {
        let rep = analyze(&p);
        if rep.governing != GoverningTheorem::PremiseViolated {
            prop_assert_eq!(rep.condition_ii, rep.condition_iii, "{}", rep.render_table());
        }
    }

    #[test]
    fn costs_are_symmetric_in_agent_labels(seed in any::<u64>(), shift in 1usize..5) {
        let p = ModelParams::scalar(1.0, 1.0, -0.2, 1.0, -0.2, 1.0, 5.0, 0.6, 1.0, 0.3, 5.0, 0.5);
        let grid = uniform_grid(0.0, 1.0, 200);
        let gains = synth_social_finite(&p, 1.0, &grid).unwrap();
        let cfg = SimConfig { n_agents: 5, dt: 0.01, t_end: 1.0, replications: 2, seed };
        let law = DecentralizedSocial(&gains);
        let b = simulate(&p, &Profile::uniform(&law), &cfg, None).unwrap();
        let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
        let permuted = permute_agents(&b, &perm);
        let c0 = evaluate_costs(&b, &p);
        let c1 = evaluate_costs(&permuted, &p);
        for (i, &j) in perm.iter().enumerate() {
            prop_assert_eq!(c1.per_agent[i], c0.per_agent[j]);
        }
        prop_assert!((c1.social - c0.social).abs() <= 1e-12 * c0.social.abs());
        let sum: f64 = c0.per_agent.iter().sum();
        prop_assert!((sum - c0.social).abs() <= 1e-12 * sum.abs());
        prop_assert!(c0.per_agent.iter().all(|j| *j >= 0.0));
    }
}

fn permute_agents(b: &TrajectoryBundle, perm: &[usize]) -> TrajectoryBundle {
    let mut out = b.clone();
    let (na, n, r) = (b.n_agents, b.n, b.r);
    for rep in 0..b.replications {
        for k in 0..b.nodes() {
            for (i, &j) in perm.iter().enumerate() {
                let dst = ((rep * b.nodes() + k) * na + i) * n;
                out.states[dst..dst + n].copy_from_slice(b.state(rep, k, j));
                let dst = ((rep * b.nodes() + k) * na + i) * r;
                out.controls[dst..dst + r].copy_from_slice(b.control(rep, k, j));
            }
        }
    }
    out
}
