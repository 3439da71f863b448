mod common;

use common::{example1, example2};
use passiv_core::passivation::{
    feasibility, maximize_ifp, maximize_ofp, run_pipeline, Boundary, Mode, PassivationOptions, PassivationProblem,
    PipelineOptions, StabilityStage,
};
use passiv_core::sdp::InteriorPointSolver;
use passiv_core::stability::{StabilityVerdict, CERT_EIG_FLOOR, CERT_RESIDUAL_TOL};
use passiv_core::system::{compose_closed_loop, param_freq_decompose};

fn boundary(ex: &(passiv_core::system::RationalTransfer, passiv_core::system::ControllerBasis, passiv_core::system::ParamBox)) -> (Boundary, passiv_core::system::ClosedLoop) {
    let cl = compose_closed_loop(&ex.0, &ex.1).unwrap();
    (Boundary::new(&param_freq_decompose(&cl).unwrap()).unwrap(), cl)
}

#[test]
fn example1_ifp() {
    let ex = example1();
    let (b, _) = boundary(&ex);
    let r = maximize_ifp(&b, &ex.2, &InteriorPointSolver::default(), &PassivationOptions::default()).unwrap();
    println!("{:?} {} {:?}", r.rho_star, r.index_value, r.bisection_trace);
    assert!((r.index_value - 10.0 / 21.0).abs() < 1e-3);
    assert!((r.rho_star[0] - 0.1).abs() < 0.02 && (r.rho_star[1] - 1.5).abs() < 0.02);
    assert!(r.certificate.is_valid(CERT_RESIDUAL_TOL, CERT_EIG_FLOOR));
}

#[test]
fn example2_feasibility_and_ifp() {
    let ex = example2();
    let (b, _) = boundary(&ex);
    let s = InteriorPointSolver::default();
    let f = feasibility(&b, &ex.2, &s, &PassivationOptions::default()).unwrap();
    assert!(f.passivatable, "{}", f.epsilon_star);
    let r = maximize_ifp(&b, &ex.2, &s, &PassivationOptions::default()).unwrap();
    println!("{:?} {}", r.rho_star, r.index_value);
    assert!((r.index_value - 0.6583).abs() < 2e-3);
    assert!((r.rho_star[0] - 0.516).abs() < 0.02 && (r.rho_star[1] - 0.669).abs() < 0.02);
}

#[test]
fn example2_ofp() {
    let ex = example2();
    let (b, cl) = boundary(&ex);
    let r = maximize_ofp(&b, &cl, &ex.2, &InteriorPointSolver::default(), &PassivationOptions::default()).unwrap();
    println!("{:?} {}", r.rho_star, r.index_value);
    assert!((r.index_value - 0.54185).abs() < 1e-3);
    assert!((r.rho_star[0] - 1.0).abs() < 0.02 && (r.rho_star[1] - 1.0).abs() < 0.02);
}

#[test]
fn example2_pipeline_needs_direct_mode() {
    let (plant, basis, bx) = example2();
    let prob = PassivationProblem { plant, basis, bx };
    let s = InteriorPointSolver::default();
    let full = run_pipeline(&prob, &PipelineOptions::default(), &s).unwrap();
    match &full.stability {
        StabilityStage::Checked(c) => assert_eq!(c.verdict, StabilityVerdict::Inconclusive),
        StabilityStage::Skipped => panic!("stability stage skipped"),
    }
    assert!(full.counterexample.is_some());
    let direct = run_pipeline(&prob, &PipelineOptions { direct: true, ..Default::default() }, &s).unwrap();
    assert_eq!(direct.stable_at_rho_star, Some(true));
    assert_eq!(direct.table_positive_at_rho_star, Some(true));
}

#[test]
fn example1_pipeline_certifies_box() {
    let (plant, basis, bx) = example1();
    let prob = PassivationProblem { plant, basis, bx };
    let out = run_pipeline(&prob, &PipelineOptions { mode: Mode::Ifp, ..Default::default() }, &InteriorPointSolver::default()).unwrap();
    assert!(matches!(&out.stability, StabilityStage::Checked(c) if c.verdict == StabilityVerdict::Certified));
    assert_eq!(out.stable_at_rho_star, Some(true));
}
