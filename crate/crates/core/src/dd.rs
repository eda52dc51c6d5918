//! Double-double helpers on top of `twofloat`.

use twofloat::TwoFloat;

/// `a / b` with one residual correction. The plain `TwoFloat` quotient is only
/// good to about 1e-17, which is not enough where the result feeds a cancellation.
pub(crate) fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q = a / b;
    let r = a - q * b;
    q + r / b
}
