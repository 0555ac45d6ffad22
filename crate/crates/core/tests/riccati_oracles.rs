mod common;

use common::{quadrotor, rel_err, scalar, scalar_biased, stats};
use drlq_core::dr_riccati::{
    dp_oracle, finite_horizon_value, penalty_is_feasible, search_1d, DpGrid, RiccatiIteration,
    Sense,
};
use drlq_core::qfunction::{tilde_q_minmax, tilde_q_params};
use drlq_core::{
    assemble_blocks, eval_q, extract_policy, greedy_policies, hinf_policy, linalg, q_from_value,
    seeded_rng, solve, worst_case_distribution, CostSpec, DisturbanceSamples, LtiSystem, Matrix,
    SolverOptions, Vector,
};
use rand::Rng;

fn v1(x: f64) -> Vector {
    Vector::from_vec(vec![x])
}

fn random_vec(rng: &mut impl Rng, n: usize, half: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-half..half))
}

#[test]
fn grid_dp_matches_finite_horizon_iterate() {
    let (sys, cost, samples) = scalar();
    let vf = finite_horizon_value(&sys, &cost, &stats(&samples), 50).unwrap();
    let grid = DpGrid::symmetric(1, 1, 1, 2.0, 4.0, 4.0);
    let table = drlq_core::dr_riccati::DpOracle::new(&sys, &cost, &samples, grid)
        .unwrap()
        .run(50)
        .unwrap();
    for x in [-1.0, -0.5, 0.0, 0.3, 1.0] {
        let dp = table.value_at(&v1(x)).unwrap();
        let exact = vf.eval(&v1(x));
        assert!(
            (dp - exact).abs() < 1e-6,
            "x={x}: dp {dp} vs iterate {exact}"
        );
    }
}

#[test]
fn grid_dp_of_static_plant_is_the_state_cost() {
    let zero = Matrix::zeros(1, 1);
    let sys = LtiSystem::new(zero.clone(), zero.clone(), zero).unwrap();
    let (_, cost, samples) = scalar();
    let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
    assert_eq!(report.value.z, 0.0);
    for x in [-0.8, 0.0, 0.45] {
        let dp = dp_oracle(
            &sys,
            &cost,
            &samples,
            3,
            &v1(x),
            DpGrid::symmetric(1, 1, 1, 1.0, 1.0, 1.0),
        )
        .unwrap();
        assert!((dp - x * x).abs() < 1e-9, "{dp}");
    }
}

fn grid_minmax(q: &drlq_core::QParams, x: f64) -> (f64, f64, f64) {
    let mut inner_arg = 0.0;
    let mut outer = |u: f64| {
        let mut f = |w: f64| eval_q(q, &v1(x), &v1(u), &v1(w)).map(Some);
        Ok(search_1d(&mut f, -5.0, 5.0, 41, 1e-12, Sense::Maximize)?.map(|(_, v)| v))
    };
    let (u, value) = search_1d(&mut outer, -5.0, 5.0, 41, 1e-12, Sense::Minimize)
        .unwrap()
        .unwrap();
    let mut f = |w: f64| eval_q(q, &v1(x), &v1(u), &v1(w)).map(Some);
    if let Some((w, _)) = search_1d(&mut f, -5.0, 5.0, 41, 1e-12, Sense::Maximize).unwrap() {
        inner_arg = w;
    }
    (u, inner_arg, value)
}

#[test]
fn extracted_policy_matches_grid_minmax() {
    for (sys, cost, samples) in [scalar(), scalar_biased()] {
        let st = stats(&samples);
        let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
        let q = q_from_value(&sys, &cost, &report.value, &st).unwrap();
        let mut rng = seeded_rng(5);
        for _ in 0..5 {
            let x = rng.random_range(-1.5..1.5);
            let (u, w, value) = grid_minmax(&q, x);
            let u_star = report.policy.control(&v1(x))[0];
            let w_star = report.policy.adversary(&v1(x))[0];
            assert!((u - u_star).abs() < 1e-4, "u {u} vs {u_star}");
            assert!((w - w_star).abs() < 1e-4, "w {w} vs {w_star}");
            let exact = eval_q(&q, &v1(x), &v1(u_star), &v1(w_star)).unwrap();
            assert!((value - exact).abs() < 1e-8);
        }
    }
}

/// `alpha V(Ax + Bu + Ew) - lambda (w - atom)^2` without the constant.
#[allow(clippy::too_many_arguments)]
fn per_atom_phi(
    sys: &LtiSystem,
    cost: &CostSpec,
    p: f64,
    g: f64,
    x: f64,
    u: f64,
    w: f64,
    atom: f64,
) -> f64 {
    let y = sys.a()[(0, 0)] * x + sys.b()[(0, 0)] * u + sys.e()[(0, 0)] * w;
    cost.alpha() * (p * y * y + g * y) - cost.lambda() * (w - atom).powi(2)
}

#[test]
fn worst_case_atoms_maximize_their_own_term() {
    for (sys, cost, samples) in [scalar(), scalar_biased()] {
        let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
        let (p, g) = (report.value.p[(0, 0)], report.value.g[0]);
        let x = 0.7;
        let u = report.policy.control(&v1(x))[0];
        let atoms_at = report.worst_case.atoms_at(&v1(x));
        for (atom, w_star) in samples.atoms().iter().zip(&atoms_at) {
            let mut f = |w: f64| Ok(Some(per_atom_phi(&sys, &cost, p, g, x, u, w, atom[0])));
            let (w, _) = search_1d(&mut f, -5.0, 5.0, 401, 1e-12, Sense::Maximize)
                .unwrap()
                .unwrap();
            assert!((w - w_star[0]).abs() < 1e-4, "grid {w} vs {}", w_star[0]);
        }
    }
}

#[test]
fn per_atom_closed_form_maximum_matches_grid() {
    let (sys, cost, samples) = scalar_biased();
    let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
    let (p, g) = (report.value.p[(0, 0)], report.value.g[0]);
    let (alpha, lambda, e) = (cost.alpha(), cost.lambda(), sys.e()[(0, 0)]);
    let mut rng = seeded_rng(11);
    for _ in 0..10 {
        let (x, u) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let y = sys.a()[(0, 0)] * x + sys.b()[(0, 0)] * u;
        let mut closed = 0.0;
        let mut grid = 0.0;
        for atom in samples.atoms() {
            let c2 = alpha * p * e * e - lambda;
            let c1 = 2.0 * alpha * p * y * e + alpha * g * e + 2.0 * lambda * atom[0];
            let c0 = alpha * (p * y * y + g * y) - lambda * atom[0] * atom[0];
            closed += c0 - c1 * c1 / (4.0 * c2);
            let mut f = |w: f64| Ok(Some(per_atom_phi(&sys, &cost, p, g, x, u, w, atom[0])));
            grid += search_1d(&mut f, -5.0, 5.0, 401, 1e-12, Sense::Maximize)
                .unwrap()
                .unwrap()
                .1;
        }
        let n = samples.len() as f64;
        assert!((closed / n - grid / n).abs() < 1e-4);
    }
}

#[test]
fn saddle_inequalities_hold_under_perturbation() {
    let (sys, cost, samples) = quadrotor(6.0);
    let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
    let q = q_from_value(&sys, &cost, &report.value, &stats(&samples)).unwrap();
    let mut rng = seeded_rng(1000);
    let mut violations = 0;
    for _ in 0..1000 {
        let x = random_vec(&mut rng, 4, 2.0);
        let (u, w) = (report.policy.control(&x), report.policy.adversary(&x));
        let du = random_vec(&mut rng, 2, 1.0);
        let dw = random_vec(&mut rng, 2, 1.0);
        let center = eval_q(&q, &x, &u, &w).unwrap();
        let moved_u = eval_q(&q, &x, &(&u + du), &w).unwrap();
        let moved_w = eval_q(&q, &x, &u, &(&w + dw)).unwrap();
        if !(moved_u >= center && center >= moved_w) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn saddle_point_is_stationary() {
    let (sys, cost, samples) = quadrotor(6.0);
    let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
    let q = q_from_value(&sys, &cost, &report.value, &stats(&samples)).unwrap();
    let mut rng = seeded_rng(3);
    let h = 1e-4;
    for _ in 0..10 {
        let x = random_vec(&mut rng, 4, 2.0);
        let (u, w) = (report.policy.control(&x), report.policy.adversary(&x));
        for k in 0..4 {
            let bump = |sign: f64| {
                let (mut u, mut w) = (u.clone(), w.clone());
                if k < 2 {
                    u[k] += sign * h;
                } else {
                    w[k - 2] += sign * h;
                }
                eval_q(&q, &x, &u, &w).unwrap()
            };
            let slope = (bump(1.0) - bump(-1.0)) / (2.0 * h);
            assert!(slope.abs() < 1e-6, "component {k}: {slope}");
        }
    }
}

#[test]
fn greedy_and_extracted_policies_agree() {
    for (sys, cost, samples) in [scalar_biased(), quadrotor(6.0), quadrotor(0.5)] {
        let st = stats(&samples);
        let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
        let greedy =
            greedy_policies(&q_from_value(&sys, &cost, &report.value, &st).unwrap()).unwrap();
        assert!(rel_err(&greedy.gain, &report.policy.gain) < 1e-8);
        assert!(rel_err(&greedy.adversary_gain, &report.policy.adversary_gain) < 1e-8);
        assert!((&greedy.offset - &report.policy.offset).amax() < 1e-8);
        assert!((&greedy.adversary_offset - &report.policy.adversary_offset).amax() < 1e-8);
    }
}

#[test]
fn value_iterates_increase_in_loewner_order() {
    let (sys, cost, samples) = quadrotor(6.0);
    let st = stats(&samples);
    let mut it = RiccatiIteration::new(&sys, &cost, &st).unwrap();
    let mut prev = it.value().p.clone();
    for _ in 0..300 {
        it.step().unwrap();
        let p = it.value().p.clone();
        let gap = linalg::min_eigenvalue(&(&p - &prev));
        assert!(gap >= -1e-9 * p.amax(), "{gap}");
        prev = p;
    }
}

#[test]
fn feasibility_persists_for_larger_penalties() {
    let (sys, cost, _) = quadrotor(6.0);
    let opts = SolverOptions::default();
    let flags: Vec<bool> = [0.1, 0.15, 0.2, 0.22, 0.25, 0.3, 0.5, 1.0, 6.0, 100.0]
        .iter()
        .map(|l| penalty_is_feasible(&sys, &cost, *l, opts).unwrap())
        .collect();
    let first = flags.iter().position(|f| *f).unwrap();
    assert!(flags[first..].iter().all(|f| *f), "{flags:?}");
    assert!(!flags[0]);
}

#[test]
fn per_atom_game_reproduces_the_stochastic_value() {
    for (sys, cost, samples) in [scalar(), scalar_biased(), quadrotor(6.0)] {
        let n = sys.state_dim();
        let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
        let mut rng = seeded_rng(100);
        for k in 0..100 {
            let x = random_vec(&mut rng, n, 2.0);
            let opt = tilde_q_minmax(&sys, &cost, &report.value, &samples, &x).unwrap();
            let v = report.value.eval(&x);
            assert!(
                (opt.value - v).abs() < 1e-7 * v.abs().max(1.0),
                "state {k}: {} vs {v}",
                opt.value
            );
            if k < 20 {
                let u = report.policy.control(&x);
                assert!((&opt.control - &u).amax() < 1e-6);
                for (got, want) in opt.atoms.iter().zip(report.worst_case.atoms_at(&x)) {
                    assert!((got - want).amax() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn one_atom_per_atom_game_is_the_mean_game() {
    let (sys, cost, _) = quadrotor(6.0);
    let samples = DisturbanceSamples::from_rows(&[vec![1.7974, 0.5405]]).unwrap();
    let st = stats(&samples);
    let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
    assert_eq!(report.value.z, report.value.z_det);
    let tilde = tilde_q_params(&sys, &cost, &report.value, &samples).unwrap();
    let mean = q_from_value(&sys, &cost, &report.value, &st).unwrap();
    assert!(tilde.max_rel_diff(&mean) < 1e-12);
}

#[test]
fn worst_case_offsets_average_to_adversary_offset() {
    let (sys, cost, samples) = quadrotor(6.0);
    let st = stats(&samples);
    let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
    let blocks = assemble_blocks(&sys, &cost, &report.value, &st, &samples).unwrap();
    let wc = worst_case_distribution(&blocks).unwrap();
    assert!((wc.mean_offset() - &report.policy.adversary_offset).amax() < 1e-10);
    assert_eq!(extract_policy(&blocks).unwrap(), report.policy);
}

/// Zero-mean game by the classical form `P = Q + A' aP (I + (B R^-1 B' - E E'/lambda) aP)^-1 A`.
fn hinf_reference(sys: &LtiSystem, cost: &CostSpec) -> (Matrix, Matrix, Matrix) {
    let n = sys.state_dim();
    let (a, b, e) = (sys.a(), sys.b(), sys.e());
    let r_inv = cost.r().clone().try_inverse().unwrap();
    let spread = b * &r_inv * b.transpose() - e * e.transpose() / cost.lambda();
    let mut p = Matrix::zeros(n, n);
    for _ in 0..200_000 {
        let ap = &p * cost.alpha();
        let core = (Matrix::identity(n, n) + &spread * &ap)
            .try_inverse()
            .unwrap();
        let next = cost.q() + a.transpose() * &ap * &core * a;
        let next = (&next + next.transpose()) * 0.5;
        let done = (&next - &p).amax() < 1e-14 * next.amax();
        p = next;
        if done {
            break;
        }
    }
    let ap = &p * cost.alpha();
    let core = (Matrix::identity(n, n) + &spread * &ap)
        .try_inverse()
        .unwrap();
    let k = -(&r_inv * b.transpose() * &ap * &core * a);
    let l = e.transpose() * &ap * &core * a / cost.lambda();
    (p, k, l)
}

#[test]
fn hinf_policy_matches_classical_riccati() {
    for lambda in [0.5, 6.0] {
        let (sys, cost, _) = quadrotor(lambda);
        let opts = SolverOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let report = hinf_policy(&sys, &cost, opts).unwrap();
        let (p, k, l) = hinf_reference(&sys, &cost);
        assert!(
            rel_err(&report.value.p, &p) < 1e-8,
            "{}",
            rel_err(&report.value.p, &p)
        );
        assert!(rel_err(&report.policy.gain, &k) < 1e-8);
        assert!(rel_err(&report.policy.adversary_gain, &l) < 1e-8);
    }
}
