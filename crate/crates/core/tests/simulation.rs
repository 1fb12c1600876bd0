use mflq_core::gains::InfiniteOptions;
use mflq_core::path::uniform_grid;
use mflq_core::sim::{
    discounted_state_energy, evaluate_costs, mean_stderr, simulate, AffineFeedback,
    CentralizedSocial, ControlLaw, DecentralizedSocial, Profile, SimConfig, ZeroLaw,
};
use mflq_core::{synth_social_finite, synth_social_infinite, ModelParams};
use nalgebra::{DMatrix, DVector};

fn section_v(a: f64, g: f64) -> ModelParams {
    ModelParams::scalar(a, 1.0, g, 1.0, -0.2, 1.0, 5.0, 0.6, 1.0, 0.1, 5.0, 0.5)
}

fn cfg(n_agents: usize, dt: f64, t_end: f64, replications: usize, seed: u64) -> SimConfig {
    SimConfig {
        n_agents,
        dt,
        t_end,
        replications,
        seed,
    }
}

#[test]
fn quiet_system_stays_at_rest() {
    let p = ModelParams::scalar(0.7, 1.0, -0.3, 1.0, 0.0, 1.0, 0.0, 0.6, 0.0, 0.0, 0.0, 0.0);
    let law = ZeroLaw::new(1, 1);
    let b = simulate(&p, &Profile::uniform(&law), &cfg(4, 0.01, 2.0, 2, 3), None).unwrap();
    assert!(b.states.iter().all(|x| *x == 0.0));
}

#[test]
fn identical_seed_gives_identical_bundle_and_exact_average() {
    let p = section_v(1.0, -0.2);
    let g = synth_social_infinite(&p, InfiniteOptions::default()).unwrap();
    let law = DecentralizedSocial(&g);
    let c = cfg(7, 0.01, 3.0, 3, 42);
    let a = simulate(&p, &Profile::uniform(&law), &c, Some(&g.x_bar)).unwrap();
    let b = simulate(&p, &Profile::uniform(&law), &c, Some(&g.x_bar)).unwrap();
    assert_eq!(a, b);
    for rep in 0..c.replications {
        for k in 0..a.nodes() {
            let mut s = 0.0;
            for i in 0..c.n_agents {
                s += a.state(rep, k, i)[0];
            }
            assert_eq!(a.average(rep, k)[0], s / c.n_agents as f64);
        }
    }
}

#[test]
fn adding_agents_keeps_existing_noise() {
    let p = section_v(1.0, 0.0);
    let law = ZeroLaw::new(1, 1);
    let small = simulate(&p, &Profile::uniform(&law), &cfg(3, 0.01, 1.0, 2, 8), None).unwrap();
    let large = simulate(&p, &Profile::uniform(&law), &cfg(6, 0.01, 1.0, 2, 8), None).unwrap();
    for rep in 0..2 {
        for k in 0..small.nodes() {
            for i in 0..3 {
                assert_eq!(small.state(rep, k, i), large.state(rep, k, i));
            }
        }
    }
}

#[test]
fn single_noiseless_agent_follows_mean_field_path() {
    let mut p = ModelParams::scalar(1.0, 1.0, 0.0, 1.0, -0.2, 1.0, 5.0, 0.6, 1.0, 0.0, 5.0, 0.0);
    p.init_cov = DMatrix::zeros(1, 1);
    let g = synth_social_infinite(&p, InfiniteOptions::default()).unwrap();
    let law = DecentralizedSocial(&g);
    let err = |dt: f64| {
        let b = simulate(
            &p,
            &Profile::uniform(&law),
            &cfg(1, dt, 5.0, 1, 0),
            Some(&g.x_bar),
        )
        .unwrap();
        (0..b.nodes())
            .map(|k| (b.state(0, k, 0)[0] - b.xbar(k).unwrap()[0]).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(0.02), err(0.01));
    assert!(e1 < 0.05, "{e1}");
    assert!((e1 / e2 - 2.0).abs() < 0.3, "error ratio {}", e1 / e2);
}

#[test]
fn sample_mean_tracks_mean_field_path() {
    let p = section_v(1.0, -0.2);
    let g = synth_social_infinite(&p, InfiniteOptions::default()).unwrap();
    let law = DecentralizedSocial(&g);
    let c = cfg(20, 0.01, 10.0, 200, 77);
    let b = simulate(&p, &Profile::uniform(&law), &c, Some(&g.x_bar)).unwrap();
    for k in (0..b.nodes()).step_by(100) {
        let v: Vec<f64> = (0..c.replications)
            .map(|rep| b.average(rep, k)[0])
            .collect();
        let (m, se) = mean_stderr(&v);
        let target = b.xbar(k).unwrap()[0];
        assert!(
            (m - target).abs() <= 3.0 * se + 1e-2 * c.dt,
            "t = {}: {m} vs {target} (se {se})",
            b.grid[k]
        );
    }
}

#[test]
fn agents_reach_rough_agreement() {
    let p = section_v(1.0, -0.2);
    let g = synth_social_infinite(&p, InfiniteOptions::default()).unwrap();
    let law = DecentralizedSocial(&g);
    let b = simulate(
        &p,
        &Profile::uniform(&law),
        &cfg(50, 0.01, 10.0, 1, 5),
        None,
    )
    .unwrap();
    let spread = |k: usize| {
        let v: Vec<f64> = (0..50).map(|i| b.state(0, k, i)[0]).collect();
        let (m, _) = mean_stderr(&v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 49.0).sqrt()
    };
    assert!(spread(b.nodes() - 1) < spread(0));
}

#[test]
fn cost_of_resting_at_target_is_zero_then_constant() {
    let mut p = ModelParams::scalar(0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 3.0, 0.6, 0.0, 0.0, 3.0, 0.0);
    let law = ZeroLaw::new(1, 1);
    let c = cfg(3, 0.01, 10.0, 1, 0);
    let b = simulate(&p, &Profile::uniform(&law), &c, None).unwrap();
    assert!(evaluate_costs(&b, &p).per_agent.iter().all(|j| *j == 0.0));

    // x ≡ η + 0.5 gives running cost 2·0.25 = 0.5
    p.x_bar0 = DVector::from_element(1, 3.5);
    let b = simulate(&p, &Profile::uniform(&law), &c, None).unwrap();
    let exact = 0.5 * (1.0 - (-6.0f64).exp()) / 0.6;
    for j in evaluate_costs(&b, &p).per_agent {
        assert!((j - exact).abs() < 1e-4 * exact, "{j} vs {exact}");
    }
}

#[test]
fn halving_step_changes_cost_at_first_order() {
    let mut p = section_v(1.0, -0.2);
    p.sigma = mflq_core::TimeFunction::constant(&[0.0]);
    p.init_cov = DMatrix::zeros(1, 1);
    let g = synth_social_infinite(&p, InfiniteOptions::default()).unwrap();
    let law = DecentralizedSocial(&g);
    let j = |dt: f64| {
        let b = simulate(&p, &Profile::uniform(&law), &cfg(2, dt, 5.0, 1, 0), None).unwrap();
        evaluate_costs(&b, &p).per_agent[0]
    };
    let (j1, j2, j3) = (j(0.02), j(0.01), j(0.005));
    let ratio = (j1 - j2) / (j2 - j3);
    assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    assert!((j2 - j3).abs() < 1e-2 * j3.abs());
}

#[test]
fn discounted_energy_settles_as_horizon_grows() {
    let p = section_v(1.0, -0.2);
    let g = synth_social_infinite(&p, InfiniteOptions::default()).unwrap();
    let law = DecentralizedSocial(&g);
    let (e10, _) = discounted_state_energy(
        &simulate(
            &p,
            &Profile::uniform(&law),
            &cfg(10, 0.01, 10.0, 4, 1),
            None,
        )
        .unwrap(),
        0.6,
    );
    let (e20, _) = discounted_state_energy(
        &simulate(
            &p,
            &Profile::uniform(&law),
            &cfg(10, 0.01, 20.0, 4, 1),
            None,
        )
        .unwrap(),
        0.6,
    );
    assert!(e10.is_finite() && e20 >= e10);
    assert!((e20 - e10) / e10 < 0.01, "{e10} → {e20}");
}

/// Centralized feedback plus an agent-specific open-loop perturbation.
struct Perturbed<'a> {
    base: CentralizedSocial<'a>,
    amplitude: f64,
    phase: f64,
}

impl ControlLaw for Perturbed<'_> {
    fn feedback(&self, t: f64) -> AffineFeedback {
        let mut fb = self.base.feedback(t);
        fb.offset[0] += self.amplitude * (self.phase + 1.3 * t).sin();
        fb
    }
}

#[test]
fn centralized_law_beats_perturbations_for_two_agents() {
    let mut p = section_v(1.0, -0.2);
    p.sigma = mflq_core::TimeFunction::constant(&[0.0]);
    p.init_cov = DMatrix::zeros(1, 1);
    let t_end = 3.0;
    let g = synth_social_finite(&p, t_end, &uniform_grid(0.0, t_end, 3000)).unwrap();
    let c = cfg(2, 1e-3, t_end, 1, 0);
    let social = |laws: [&dyn ControlLaw; 2]| {
        let profile = Profile::uniform(laws[0]).with_override(1, laws[1]);
        evaluate_costs(&simulate(&p, &profile, &c, None).unwrap(), &p).social
    };
    let base = CentralizedSocial(&g);
    let j0 = social([&base, &base]);
    for (k, (a0, a1)) in [(0.3, 0.0), (0.0, 0.3), (0.3, -0.3), (-0.2, 0.4), (0.5, 0.5)]
        .into_iter()
        .enumerate()
    {
        let j: Vec<f64> = [1.0, -1.0]
            .iter()
            .map(|sign| {
                let l0 = Perturbed {
                    base: CentralizedSocial(&g),
                    amplitude: sign * a0,
                    phase: k as f64,
                };
                let l1 = Perturbed {
                    base: CentralizedSocial(&g),
                    amplitude: sign * a1,
                    phase: 2.0 * k as f64,
                };
                social([&l0, &l1])
            })
            .collect();
        let curvature = 0.5 * (j[0] + j[1]) - j0;
        assert!(
            j.iter().all(|v| *v > j0 + 1e-4 * j0),
            "perturbation {k} improves: {j:?} vs {j0}"
        );
        // the first variation vanishes up to discretization error
        assert!(
            (j[0] - j[1]).abs() < 0.1 * curvature,
            "perturbation {k}: {j:?} vs {j0}"
        );
    }
}
