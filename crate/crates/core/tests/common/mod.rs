#![allow(dead_code)]

use passiv_core::poly::{rat, Rational};
use passiv_core::system::{ControllerBasis, Domain, ParamBox, RationalTransfer};

pub fn q(v: i64) -> Rational {
    rat(v, 1)
}

pub fn tf(num: &[Rational], den: &[Rational], d: Domain) -> RationalTransfer {
    RationalTransfer::new(num, den, d).unwrap()
}

/// `z/(z−2)` with basis `[1, 1/(z−0.5)]` on `[0.1,1]×[1,2]`.
pub fn example1() -> (RationalTransfer, ControllerBasis, ParamBox) {
    let d = Domain::Dt;
    let g0 = tf(&[q(0), q(1)], &[q(-2), q(1)], d);
    let basis = ControllerBasis::new(vec![tf(&[q(1)], &[q(1)], d), tf(&[q(1)], &[rat(-1, 2), q(1)], d)]).unwrap();
    let bx = ParamBox::new(vec![rat(1, 10), q(1)], vec![q(1), q(2)]).unwrap();
    (g0, basis, bx)
}

/// `(s+2)(s+3)/((s−1)(s−2))` with basis `[1, 1/(s+1)]` on `[0,1]²`.
pub fn example2() -> (RationalTransfer, ControllerBasis, ParamBox) {
    let d = Domain::Ct;
    let g0 = tf(&[q(6), q(5), q(1)], &[q(2), q(-3), q(1)], d);
    let basis = ControllerBasis::new(vec![tf(&[q(1)], &[q(1)], d), tf(&[q(1)], &[q(1), q(1)], d)]).unwrap();
    let bx = ParamBox::new(vec![q(0), q(0)], vec![q(1), q(1)]).unwrap();
    (g0, basis, bx)
}
