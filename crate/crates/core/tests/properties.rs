//! Property tests over random plants and channel traces.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use secrecy_core::baselines::{baseline_covariances, WithholdPolicy};
use secrecy_core::channel::OutcomeTrace;
use secrecy_core::code::{user_decode, CodeMode, Encoder, Reference};
use secrecy_core::estimators::EveFilter;
use secrecy_core::gaussian::{
    condition, dare_residual, min_eigenvalue, pseudoinverse, solve_dare, symmetrize, CovarianceMatrix,
    GaussianBelief,
};
use secrecy_core::harness::runner::simulate_coded;
use secrecy_core::plant::{open_loop_covariance, simulate, LinearSystem};

const PSD_TOL: f64 = 1e-9;

fn matrix(n: usize, m: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, n * m).prop_map(move |v| DMatrix::from_vec(n, m, v))
}

/// `B B' + εI` for a random square `B`.
fn pd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n, -1.0, 1.0).prop_map(move |b| symmetrize(&(&b * b.transpose())) + DMatrix::identity(n, n) * 0.05)
}

fn state_system() -> impl Strategy<Value = LinearSystem> {
    (1usize..=3).prop_flat_map(|n| {
        (matrix(n, n, -1.4, 1.4), pd(n), pd(n))
            .prop_map(|(a, q, s0)| LinearSystem::state_measurement(a, q, s0).expect("valid random plant"))
    })
}

fn trace(len: usize) -> impl Strategy<Value = OutcomeTrace> {
    (prop::collection::vec(any::<bool>(), len), prop::collection::vec(any::<bool>(), len))
        .prop_map(|(u, e)| OutcomeTrace::new(u, e).expect("equal lengths"))
}

fn loewner_le(smaller: &DMatrix<f64>, larger: &DMatrix<f64>) -> bool {
    let scale = larger.amax().max(1.0);
    min_eigenvalue(&symmetrize(&(larger - smaller))) >= -PSD_TOL * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditioning_is_psd_and_shrinks_the_marginal(
        (n, m, cov, z) in (1usize..=3, 1usize..=3).prop_flat_map(|(n, m)| {
            (Just(n), Just(m), matrix(n + m, n + m, -1.0, 1.0), prop::collection::vec(-3.0..3.0f64, m))
        })
    ) {
        let joint_cov = CovarianceMatrix::from_symmetrized(&(&cov * cov.transpose()));
        let joint = GaussianBelief::new(DVector::zeros(n + m), joint_cov, &[("x", n), ("z", m)]).unwrap();
        let post = condition(&joint, "z", &DVector::from_vec(z)).unwrap();
        let prior = joint.marginal("x").unwrap();
        prop_assert!(post.cov().min_eigenvalue() >= -PSD_TOL);
        prop_assert!(loewner_le(post.cov().matrix(), prior.cov().matrix()));
    }

    #[test]
    fn pseudoinverse_satisfies_penrose_identities(m in (1usize..=4, 1usize..=4).prop_flat_map(|(r, c)| matrix(r, c, -2.0, 2.0))) {
        let p = pseudoinverse(&m);
        let tol = 1e-8 * m.amax().max(1.0).powi(2);
        prop_assert!((&m * &p * &m - &m).amax() <= tol);
        prop_assert!((&p * &m * &p - &p).amax() <= tol * p.amax().max(1.0).powi(2));
        prop_assert!((&m * &p - (&m * &p).transpose()).amax() <= tol);
        prop_assert!((&p * &m - (&p * &m).transpose()).amax() <= tol);
    }

    #[test]
    fn rank_deficient_symmetric_pseudoinverse(b in (2usize..=4).prop_flat_map(|n| matrix(n, n - 1, -2.0, 2.0))) {
        let s = symmetrize(&(&b * b.transpose()));
        let p = pseudoinverse(&s);
        prop_assert!((&s * &p * &s - &s).amax() <= 1e-8 * s.amax().max(1.0));
        prop_assert!((&p - p.transpose()).amax() <= 1e-10 * p.amax().max(1.0));
    }

    #[test]
    fn dare_solution_is_a_psd_fixed_point(
        (a, q, r) in (1usize..=3).prop_flat_map(|n| (matrix(n, n, -1.5, 1.5), pd(n), pd(n)))
    ) {
        // C = I makes every pair detectable, so the stabilizing solution exists.
        let c = DMatrix::identity(a.nrows(), a.nrows());
        let p = solve_dare(&a, &c, &q, &r).unwrap();
        prop_assert!(p.min_eigenvalue() >= -PSD_TOL);
        prop_assert!(dare_residual(p.matrix(), &a, &c, &q, &r) <= 1e-8 * p.matrix().amax().max(1.0));
    }

    #[test]
    fn coupling_is_idempotent_and_only_adds_interceptions((t, k0) in (1usize..25).prop_flat_map(|len| (trace(len), 0..len))) {
        let once = t.couple(k0).unwrap();
        prop_assert_eq!(once.couple(k0).unwrap(), once.clone());
        prop_assert_eq!(once.gamma_u(), t.gamma_u());
        for k in 0..t.len() {
            prop_assert!(once.eve(k) || !t.eve(k));
            if k <= k0 {
                prop_assert_eq!(once.eve(k), t.eve(k));
            }
        }
    }

    #[test]
    fn reference_times_trail_the_current_step(t in (1usize..40).prop_flat_map(trace)) {
        let refs = t.reference_times();
        for k in 0..t.len() {
            prop_assert!(refs[k] < k as i64);
            prop_assert!(k == 0 || refs[k] >= refs[k - 1]);
            if refs[k] >= 0 {
                prop_assert!(t.user(refs[k] as usize));
            }
        }
    }

    #[test]
    fn user_decodes_every_received_packet(sys in state_system(), t in trace(20), seed in any::<u64>()) {
        let traj = simulate(&sys, 19, seed, 0).unwrap();
        let mut enc = Encoder::state(&sys);
        let mut reference = Reference::initial(sys.n());
        for k in 0..20 {
            let x = &traj.states[k];
            let z = enc.encode(k, x).unwrap();
            if t.user(k) {
                let decoded = user_decode(Some(&z), &reference, k, sys.a()).unwrap();
                prop_assert!((&decoded - x).amax() <= 1e-9 * x.amax().max(1.0));
                enc.ack(k).unwrap();
                reference = Reference { time: k as i64, value: decoded };
            } else {
                prop_assert!(user_decode(None, &reference, k, sys.a()).is_none());
            }
            prop_assert_eq!(enc.ref_time(), reference.time);
        }
    }

    #[test]
    fn eavesdropper_update_never_increases_covariance(sys in state_system(), t in trace(15), seed in any::<u64>()) {
        let traj = simulate(&sys, 14, seed, 0).unwrap();
        let coded = simulate_coded(&sys, CodeMode::State, None, &traj, &t).unwrap();
        let mut eve = EveFilter::state(&sys);
        for k in 0..15 {
            if k > 0 {
                eve.predict(t.user(k - 1)).unwrap();
            }
            let before = eve.covariance();
            eve.update(t.eve(k), t.eve(k).then(|| &coded.packets[k])).unwrap();
            let after = eve.covariance();
            prop_assert!(after.min_eigenvalue() >= -PSD_TOL);
            prop_assert!(loewner_le(after.matrix(), before.matrix()));
        }
    }

    #[test]
    fn eavesdropper_never_beats_more_interceptions((sys, t, k0) in (state_system(), trace(15), 0usize..15)) {
        let traj = simulate(&sys, 14, 1, 0).unwrap();
        let base = simulate_coded(&sys, CodeMode::State, None, &traj, &t).unwrap();
        let coupled = simulate_coded(&sys, CodeMode::State, None, &traj, &t.couple(k0).unwrap()).unwrap();
        for k in 0..15 {
            prop_assert!(loewner_le(coupled.eve_cov[k].matrix(), base.eve_cov[k].matrix()));
        }
    }

    #[test]
    fn open_loop_dominates_both_receivers(sys in state_system(), t in trace(15)) {
        let traj = simulate(&sys, 14, 2, 0).unwrap();
        let coded = simulate_coded(&sys, CodeMode::State, None, &traj, &t).unwrap();
        let openloop = open_loop_covariance(&sys, 14);
        for k in 0..15 {
            prop_assert!(loewner_le(coded.eve_cov[k].matrix(), openloop[k].matrix()));
            prop_assert!(loewner_le(coded.user_cov[k].matrix(), openloop[k].matrix()));
            if t.user(k) {
                prop_assert!(coded.user_cov[k].matrix().amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn baseline_eavesdropper_resets_exactly_on_interception(
        sys in state_system(),
        t in trace(30),
        p in 0.0..1.0f64,
        s in 1u32..6,
        id in 0u64..1000,
    ) {
        for policy in [WithholdPolicy::Random { p }, WithholdPolicy::Deterministic { s }] {
            let run = baseline_covariances(policy, &sys, &t, 5, id).unwrap();
            for k in 0..t.len() {
                let eve_gets = run.transmitted[k] && t.eve(k);
                prop_assert_eq!(run.eve_cov[k].matrix().amax() == 0.0, eve_gets);
                let user_gets = run.transmitted[k] && t.user(k);
                prop_assert_eq!(run.user_cov[k].matrix().amax() == 0.0, user_gets);
            }
        }
    }
}

#[test]
fn deterministic_baseline_sends_after_s_losses_in_a_row() {
    let sys = LinearSystem::state_measurement(DMatrix::from_element(1, 1, 1.1), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
    let t = OutcomeTrace::new(vec![false; 12], vec![false; 12]).unwrap();
    let run = baseline_covariances(WithholdPolicy::Deterministic { s: 3 }, &sys, &t, 0, 0).unwrap();
    // Withheld and lost steps both count: the counter passes 3 at k = 4 and
    // the user never receives, so every later step is sent.
    let sent: Vec<usize> = (0..12).filter(|&k| run.transmitted[k]).collect();
    assert_eq!(sent, (4..12).collect::<Vec<_>>());
}
