//! Randomized invariants across the pipeline.

mod common;

use nalgebra::DMatrix;
use num::complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{example1, example2};
use passiv_core::passivation::{maximize_ifp, Boundary, Mode, PassivationError, PassivationOptions};
use passiv_core::poly::{even_odd_ct, moebius_lift, phi, rational_from_f64, Polynomial, Rational};
use passiv_core::sdp::{
    min_eigenvalue, ConicProgram, ConicSolver, InteriorPointSolver, LinExpr, SolveStatus, Var,
};
use passiv_core::sos::{recover_certificate, sos_constrain, PolyExpr, SosOptions};
use passiv_core::stability::{certify_box_stability, table_for};
use passiv_core::system::{
    closed_loop_response, compose_closed_loop, param_freq_decompose, roots, ControllerBasis, Domain, ParamBox,
    RationalTransfer,
};
use passiv_core::verify::{freq_index, grid_oracle, kyp_index, tf_to_ss, SweepOptions};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn qf(v: f64) -> Rational {
    rational_from_f64(v)
}

fn tf_f(num: &[f64], den: &[f64], d: Domain) -> RationalTransfer {
    RationalTransfer::from_f64(num, den, d).unwrap()
}

/// Ascending coefficients of `Π (x − r)` for real `r`.
fn from_roots(rs: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in rs {
        let mut n = vec![0.0; c.len() + 1];
        for (i, &v) in c.iter().enumerate() {
            n[i + 1] += v;
            n[i] -= r * v;
        }
        c = n;
    }
    c
}

fn rel_close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

// --- boundary decompositions ---------------------------------------------

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn even_odd_reconstructs_boundary_values(
        coeffs in prop::collection::vec(-5i64..=5, 1..7),
        ws in prop::collection::vec(-10.0f64..10.0, 16),
    ) {
        let c: Vec<Rational> = coeffs.iter().map(|&v| Rational::from_integer(v.into())).collect();
        let p = Polynomial::from_coeffs("s", &c);
        let eo = even_odd_ct(&p).unwrap();
        for &w in &ws {
            let direct = p.eval_complex(Complex64::new(0.0, w));
            let split = Complex64::new(eo.even.to_f64().eval_f64(&[w]), eo.odd.to_f64().eval_f64(&[w]));
            prop_assert!(rel_close(split, direct, 1e-12));
        }
    }

    #[test]
    fn even_odd_is_linear(
        a in prop::collection::vec(-5i64..=5, 1..6),
        b in prop::collection::vec(-5i64..=5, 1..6),
        k in -4i64..=4,
    ) {
        let conv = |v: &[i64]| v.iter().map(|&x| Rational::from_integer(x.into())).collect::<Vec<_>>();
        let (pa, pb) = (Polynomial::from_coeffs("s", &conv(&a)), Polynomial::from_coeffs("s", &conv(&b)));
        let kk = Rational::from_integer(k.into());
        let sum = &pa + &pb.scale(&kk);
        let (ea, eb, es) = (even_odd_ct(&pa).unwrap(), even_odd_ct(&pb).unwrap(), even_odd_ct(&sum).unwrap());
        prop_assert_eq!(es.even, &ea.even + &eb.even.scale(&kk));
        prop_assert_eq!(es.odd, &ea.odd + &eb.odd.scale(&kk));
    }

    #[test]
    fn moebius_lift_matches_circle_evaluation(
        coeffs in prop::collection::vec(-5i64..=5, 1..6),
        extra in 0usize..2,
        ys in prop::collection::vec(-20.0f64..20.0, 32),
    ) {
        let c: Vec<Rational> = coeffs.iter().map(|&v| Rational::from_integer(v.into())).collect();
        let p = Polynomial::from_coeffs("z", &c);
        let d = p.degree() as usize + extra;
        let eo = moebius_lift(&p, d).unwrap();
        for &y in &ys {
            let direct = p.eval_complex(phi(y)) * (1.0 + y * y).powi(d as i32);
            let lifted = Complex64::new(eo.even.to_f64().eval_f64(&[y]), eo.odd.to_f64().eval_f64(&[y]));
            prop_assert!(rel_close(lifted, direct, 1e-12), "y={y}: {lifted} vs {direct}");
        }
    }
}

// --- closed-loop composition ----------------------------------------------

fn random_problem(rng: &mut ChaCha8Rng, domain: Domain) -> (RationalTransfer, ControllerBasis, ParamBox) {
    // Relative degree 0 plant with real poles and zeros; basis [1, 1/(x − a)].
    let (zr, pr, a): (Vec<f64>, Vec<f64>, f64) = match domain {
        Domain::Ct => (
            (0..2).map(|_| -rng.gen_range(0.5..4.0)).collect(),
            (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            -rng.gen_range(0.5..3.0),
        ),
        Domain::Dt => (
            (0..2).map(|_| rng.gen_range(-0.8..0.8)).collect(),
            (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            rng.gen_range(-0.8..0.8),
        ),
    };
    let round = |v: f64| (v * 8.0).round() / 8.0;
    let zr: Vec<f64> = zr.into_iter().map(round).collect();
    let pr: Vec<f64> = pr.into_iter().map(round).collect();
    let g0 = tf_f(&from_roots(&zr), &from_roots(&pr), domain);
    let basis = ControllerBasis::new(vec![tf_f(&[1.0], &[1.0], domain), tf_f(&[1.0], &[-round(a), 1.0], domain)])
        .unwrap();
    let bx = ParamBox::from_f64(&[0.0, 0.0], &[2.0, 2.0]).unwrap();
    (g0, basis, bx)
}

#[test]
fn closed_loop_responses_agree_with_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for domain in [Domain::Ct, Domain::Dt] {
        let (g0, basis, bx) = random_problem(&mut rng, domain);
        let cl = compose_closed_loop(&g0, &basis).unwrap();
        let fd = param_freq_decompose(&cl).unwrap();
        for _ in 0..20 {
            let rho = bx.lerp(&[rng.gen(), rng.gen()]);
            for _ in 0..20 {
                let t: f64 = rng.gen_range(-10.0..10.0);
                let x = match domain {
                    Domain::Ct => Complex64::new(0.0, t),
                    Domain::Dt => phi(t),
                };
                let direct = closed_loop_response(&g0, &basis, &rho, x);
                let via = fd.response(&rho, t);
                if direct.norm() < 1e6 {
                    assert!(rel_close(via, direct, 1e-10), "{domain} rho={rho:?} t={t}: {via} vs {direct}");
                }
            }
        }
    }
}

#[test]
fn scaling_a_basis_entry_is_absorbed_by_its_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for domain in [Domain::Ct, Domain::Dt] {
        let (g0, basis, _) = random_problem(&mut rng, domain);
        let k = 3.0;
        let e = &basis.entries()[1];
        let scaled = ControllerBasis::new(vec![
            basis.entries()[0].clone(),
            RationalTransfer {
                num: e.num.scale(&qf(k)),
                den: e.den.clone(),
                domain,
            },
        ])
        .unwrap();
        for _ in 0..20 {
            let rho = [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)];
            let x = match domain {
                Domain::Ct => Complex64::new(0.0, rng.gen_range(0.1..10.0)),
                Domain::Dt => phi(rng.gen_range(-5.0..5.0)),
            };
            let a = closed_loop_response(&g0, &basis, &rho, x);
            let b = closed_loop_response(&g0, &scaled, &[rho[0], rho[1] / k], x);
            assert!(rel_close(a, b, 1e-12));
        }
    }
}

// --- stability tables -----------------------------------------------------

fn root_margin(cl: &passiv_core::system::ClosedLoop, rho: &[f64]) -> f64 {
    let p = cl.pd.at_f64(rho);
    let mut c = vec![0.0; p.degree() as usize + 1];
    for (m, v) in p.terms() {
        c[m.degree() as usize] = *v;
    }
    roots(&c)
        .into_iter()
        .map(|r| match cl.domain {
            Domain::Ct => r.re.abs(),
            Domain::Dt => (r.norm() - 1.0).abs(),
        })
        .fold(f64::INFINITY, f64::min)
}

/// Table positivity and companion-matrix roots agree on 200 samples,
/// skipping samples within 1e-6 of the stability boundary. Positivity is
/// the criterion for a positive leading coefficient (`f₁` is that
/// coefficient); samples where it is negative are checked against `f₁ < 0`.
fn check_table_oracle(g0: &RationalTransfer, basis: &ControllerBasis, bx: &ParamBox, seed: u64) -> usize {
    let cl = compose_closed_loop(g0, basis).unwrap();
    let table = table_for(&cl).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unstable = 0;
    for _ in 0..200 {
        let t: Vec<f64> = (0..bx.dim()).map(|_| rng.gen()).collect();
        let rho = bx.lerp(&t);
        if root_margin(&cl, &rho) < 1e-6 {
            continue;
        }
        let stable = cl.is_stable_at(&rho);
        let f = table.first_column_at(&rho);
        if f[0] < 0.0 {
            assert!(!table.is_positive_at(&rho));
            continue;
        }
        assert_eq!(table.is_positive_at(&rho), stable, "rho = {rho:?}, first column {f:?}");
        unstable += usize::from(!stable);
    }
    unstable
}

#[test]
fn table_positivity_matches_roots_on_examples() {
    let (g0, basis, _) = example1();
    let wide = ParamBox::from_f64(&[-3.0, -4.0], &[10.0, 6.0]).unwrap();
    assert!(check_table_oracle(&g0, &basis, &wide, 1) > 0);
    let (g0, basis, bx) = example2();
    assert!(check_table_oracle(&g0, &basis, &bx, 2) > 0);
}

#[test]
fn table_positivity_matches_roots_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..10 {
        let domain = if i % 2 == 0 { Domain::Ct } else { Domain::Dt };
        let (g0, basis, _) = random_problem(&mut rng, domain);
        let bx = ParamBox::from_f64(&[-2.0, -2.0], &[4.0, 4.0]).unwrap();
        check_table_oracle(&g0, &basis, &bx, 100 + i);
    }
}

#[test]
fn shrinking_the_box_never_lowers_theta() {
    let (g0, basis, _) = example1();
    let cl = compose_closed_loop(&g0, &basis).unwrap();
    let table = table_for(&cl).unwrap();
    let s = InteriorPointSolver::default();
    let boxes = [
        ([0.1, 1.0], [1.0, 2.0]),
        ([0.2, 1.2], [0.9, 1.8]),
        ([0.4, 1.4], [0.6, 1.6]),
    ];
    let thetas: Vec<f64> = boxes
        .iter()
        .map(|(lo, hi)| {
            let bx = ParamBox::from_f64(lo, hi).unwrap();
            certify_box_stability(&table, &bx, 2, &s).unwrap().theta_star
        })
        .collect();
    for w in thetas.windows(2) {
        assert!(w[1] >= w[0] - 1e-6, "{thetas:?}");
    }
}

// --- SOS ------------------------------------------------------------------

/// `min_x p(x)` from the real critical points (roots of `p'`).
fn univariate_min(c: &[f64]) -> f64 {
    let dc: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, v)| v * k as f64).collect();
    let eval = |x: f64| c.iter().rev().fold(0.0, |acc, v| acc * x + v);
    roots(&dc)
        .into_iter()
        .filter(|r| r.im.abs() < 1e-7)
        .map(|r| eval(r.re))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn univariate_sos_matches_nonnegativity() {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        prop::collection::vec((-2.0f64..2.0, 0.0f64..1.0), 1..4),
        -1.0f64..1.0,
    );
    let s = InteriorPointSolver::default();
    let (pos, neg) = (std::cell::Cell::new(0), std::cell::Cell::new(0));
    runner
        .run(&strategy, |(factors, shift)| {
            // Π ((x − r)² + s) + shift: degree 2..6.
            let mut c = vec![1.0];
            for &(r, sq) in &factors {
                let f = [r * r + sq, -2.0 * r, 1.0];
                let mut n = vec![0.0; c.len() + 2];
                for (i, &a) in c.iter().enumerate() {
                    for (j, &b) in f.iter().enumerate() {
                        n[i + j] += a * b;
                    }
                }
                c = n;
            }
            c[0] += shift;
            let min = univariate_min(&c);
            prop_assume!(min.abs() > 0.02);
            let p = Polynomial::from_coeffs("x", &c);
            let mut prog = ConicProgram::new();
            let t = prog.add_scalar("t");
            let mut e = PolyExpr::from_poly(&p);
            e.add_at(passiv_core::poly::Monomial::one(1), &LinExpr::var(t), -1.0);
            let h = sos_constrain(&mut prog, "g", &e, &SosOptions::default()).unwrap();
            prog.maximize(LinExpr::var(t));
            let sol = s.solve(&prog).unwrap();
            prop_assert_eq!(sol.status, SolveStatus::Optimal);
            let lower = sol.scalar(t);
            prop_assert!((lower - min).abs() <= 1e-5 * (1.0 + min.abs()), "bound {lower} vs min {min}");
            prop_assert_eq!(lower > 0.0, min > 0.0);
            let cert = recover_certificate(&sol, &h);
            prop_assert!(cert.residual <= 1e-6 && cert.min_eigenvalue >= -1e-7);
            let counter = if min > 0.0 { &pos } else { &neg };
            counter.set(counter.get() + 1);
            Ok(())
        })
        .unwrap();
    let (pos, neg) = (pos.get(), neg.get());
    assert!(pos > 10 && neg > 10, "pos {pos} neg {neg}");
}

// --- SDP ------------------------------------------------------------------

proptest! {
    #![proptest_config(cfg(40))]

    /// Random strictly feasible primal/dual pairs: the solver reaches
    /// optimality with a dual bound above the primal value.
    #[test]
    fn sdp_weak_duality_and_residuals(seed in any::<u64>(), n in 2usize..5, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sym = |rng: &mut ChaCha8Rng| {
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            (&a + a.transpose()) * 0.5
        };
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let x0 = &g * g.transpose() + DMatrix::identity(n, n);
        let a: Vec<DMatrix<f64>> = (0..m).map(|_| sym(&mut rng)).collect();
        let h = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let s0 = &h * h.transpose() + DMatrix::identity(n, n);
        let y0: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // max −⟨C, X⟩ with C = S0 + Σ y0_i A_i, ⟨A_i, X⟩ = ⟨A_i, X0⟩.
        let mut c = s0.clone();
        for i in 0..m {
            c += &a[i] * y0[i];
        }
        let mut prog = ConicProgram::new();
        let blk = prog.add_block("x", n);
        let lin = |mat: &DMatrix<f64>, k: f64| {
            let mut e = LinExpr::zero();
            for r in 0..n {
                for col in 0..n {
                    e.add_term(Var::entry(blk, r, col), k * mat[(r, col)]);
                }
            }
            e
        };
        for ai in &a {
            let mut e = lin(ai, 1.0);
            e.constant = -ai.dot(&x0);
            prog.add_equality(e);
        }
        prog.maximize(lin(&c, -1.0));
        let sol = InteriorPointSolver::default().solve(&prog).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let scale = 1.0 + sol.objective_value.abs();
        prop_assert!(sol.dual_bound >= sol.objective_value - 1e-6 * scale);
        prop_assert!(sol.duality_gap <= 1e-6);
        prop_assert!(sol.max_infeasibility <= 1e-6);
        prop_assert!(min_eigenvalue(&sol.block_values[0]) >= -1e-7);
        for (i, ai) in a.iter().enumerate() {
            let res = (ai.dot(&sol.block_values[0]) - ai.dot(&x0)).abs();
            prop_assert!(res <= 1e-6 * (1.0 + ai.dot(&x0).abs()), "row {i}: {res}");
        }
    }
}

// --- verification oracles -------------------------------------------------

fn random_stable(rng: &mut ChaCha8Rng, domain: Domain) -> RationalTransfer {
    let n = rng.gen_range(1..=4);
    let mut den = vec![1.0];
    let mut k = 0;
    while k < n {
        // Real pole or a complex pair, strictly stable with margin.
        if n - k >= 2 && rng.gen_bool(0.4) {
            let (re, im) = match domain {
                Domain::Ct => (-rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0)),
                Domain::Dt => {
                    let r: f64 = rng.gen_range(0.1..0.85);
                    let t: f64 = rng.gen_range(0.2..3.0);
                    (r * t.cos(), r * t.sin())
                }
            };
            let quad = [re * re + im * im, -2.0 * re, 1.0];
            let mut nd = vec![0.0; den.len() + 2];
            for (i, &a) in den.iter().enumerate() {
                for (j, &b) in quad.iter().enumerate() {
                    nd[i + j] += a * b;
                }
            }
            den = nd;
            k += 2;
        } else {
            let p = match domain {
                Domain::Ct => -rng.gen_range(0.2..3.0),
                Domain::Dt => rng.gen_range(-0.85..0.85),
            };
            let mut nd = vec![0.0; den.len() + 1];
            for (i, &a) in den.iter().enumerate() {
                nd[i + 1] += a;
                nd[i] -= p * a;
            }
            den = nd;
            k += 1;
        }
    }
    let num: Vec<f64> = (0..=n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    tf_f(&num, &den, domain)
}

#[test]
fn kyp_and_sweep_agree_on_random_stable_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let s = InteriorPointSolver::default();
    let o = SweepOptions::default();
    for i in 0..20 {
        let domain = if i % 2 == 0 { Domain::Ct } else { Domain::Dt };
        let g = random_stable(&mut rng, domain);
        let ss = tf_to_ss(&g).unwrap();
        let sweep = freq_index(&g, Mode::Ifp, &o).unwrap();
        let kyp = kyp_index(&ss, Mode::Ifp, &s).unwrap();
        assert!((sweep - kyp).abs() <= 1e-3, "system {i} ({domain}): sweep {sweep} kyp {kyp}");
    }
}

#[test]
fn realizations_round_trip_and_match_transfer() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..20 {
        let domain = if i % 2 == 0 { Domain::Ct } else { Domain::Dt };
        let g = random_stable(&mut rng, domain);
        let ss = tf_to_ss(&g).unwrap();
        let (num, den) = ss.transfer_coeffs();
        let (gn, gd) = (g.num_f64(), g.den_f64());
        let lead = gd[gd.len() - 1];
        for k in 0..den.len() {
            let en = gn.get(k).copied().unwrap_or(0.0) / lead;
            let ed = gd[k] / lead;
            assert!((num[k] - en).abs() <= 1e-9 * en.abs().max(1.0));
            assert!((den[k] - ed).abs() <= 1e-9 * ed.abs().max(1.0));
        }
        for _ in 0..16 {
            let x = match domain {
                Domain::Ct => Complex64::new(0.0, rng.gen_range(0.01..100.0)),
                Domain::Dt => phi(rng.gen_range(-10.0..10.0)),
            };
            assert!(rel_close(ss.eval(x), g.eval(x), 1e-8));
        }
    }
}

// --- synthesis ------------------------------------------------------------

fn synthesize(g0: &RationalTransfer, basis: &ControllerBasis, bx: &ParamBox) -> Result<passiv_core::passivation::SynthesisResult, PassivationError> {
    let cl = compose_closed_loop(g0, basis).unwrap();
    let b = Boundary::new(&param_freq_decompose(&cl).unwrap()).unwrap();
    maximize_ifp(&b, bx, &InteriorPointSolver::default(), &PassivationOptions::default())
}

#[test]
fn grid_oracle_never_beats_synthesis() {
    let o = SweepOptions::default();
    let mut cases: Vec<(String, RationalTransfer, ControllerBasis, ParamBox)> = vec![
        {
            let (g, b, x) = example1();
            ("example 1".into(), g, b, x)
        },
        {
            let (g, b, x) = example2();
            ("example 2".into(), g, b, x)
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for domain in [Domain::Ct, Domain::Dt] {
        let mut found = 0;
        for attempt in 0..60 {
            if found == 5 {
                break;
            }
            let (g0, basis, bx) = random_problem(&mut rng, domain);
            if synthesize(&g0, &basis, &bx).is_ok() {
                cases.push((format!("{domain} #{attempt}"), g0, basis, bx));
                found += 1;
            }
        }
        assert_eq!(found, 5, "not enough passivatable {domain} problems");
    }
    for (name, g0, basis, bx) in &cases {
        let r = synthesize(g0, basis, bx).unwrap();
        let grid = match grid_oracle(g0, basis, bx, Mode::Ifp, 50, &o) {
            Ok(g) => g,
            Err(passiv_core::verify::VerifyError::NoStablePoint) => continue,
            Err(e) => panic!("{name}: {e}"),
        };
        assert!(
            grid.index_hat <= r.index_value + 1e-2,
            "{name}: grid {} at {:?} beats synthesized {}",
            grid.index_hat,
            grid.rho_hat,
            r.index_value
        );
        // Bisection soundness: feasible γ below infeasible γ, and each
        // infeasible γ² is at least the best grid index (minus tolerance).
        let feas: Vec<f64> = r.bisection_trace.iter().filter(|t| t.1).map(|t| t.0).collect();
        let infeas: Vec<f64> = r.bisection_trace.iter().filter(|t| !t.1).map(|t| t.0).collect();
        let lo = feas.iter().cloned().fold(0.0, f64::max);
        for &g in &infeas {
            assert!(g >= lo, "{name}: infeasible {g} below feasible {lo}");
            assert!(g * g >= grid.index_hat - 2e-4 * g.max(1.0), "{name}: {g}² < grid {}", grid.index_hat);
        }
    }
}

#[test]
fn synthesized_index_is_achieved_at_rho_star() {
    let o = SweepOptions::default();
    for (g0, basis, bx) in [example1(), example2()] {
        let r = synthesize(&g0, &basis, &bx).unwrap();
        let cl = compose_closed_loop(&g0, &basis).unwrap();
        assert!(bx.contains(&r.rho_star, 1e-8));
        let sweep = freq_index(&cl.at_f64(&r.rho_star), Mode::Ifp, &o).unwrap();
        assert!(sweep >= r.index_value - 1e-6, "sweep {sweep} < claimed {}", r.index_value);
        assert!((sweep - r.index_value).abs() <= 5e-3);
    }
}

#[test]
fn joint_scaling_of_the_loop_changes_nothing() {
    let (g0, basis, bx) = example2();
    let base = synthesize(&g0, &basis, &bx).unwrap();
    for k in [1e-3, 3.0, 1e3] {
        let g0k = RationalTransfer {
            num: g0.num.scale(&qf(k)),
            den: g0.den.scale(&qf(k)),
            domain: g0.domain,
        };
        let r = synthesize(&g0k, &basis, &bx).unwrap();
        assert!((r.index_value - base.index_value).abs() < 1e-6, "k={k}");
        for i in 0..2 {
            assert!((r.rho_star[i] - base.rho_star[i]).abs() < 1e-4, "k={k}");
        }
    }
}
