//! Two-piece cubic tire friction curve.
//!
//! Piece 0 runs from the origin anchor to the extremum, piece 1 from the
//! extremum to the asymptote. Each piece is closed with Hermite conditions:
//! interpolate both end values, take the configured initial slope at the
//! origin anchor and a zero slope at the extremum and at the asymptote.
//! Beyond the asymptote the curve is flat, and negative slips use the odd
//! extension `F(-S) = -F(S)`.

use serde::{Deserialize, Serialize};

use crate::num::{solve_dense, Real};
use crate::vehicle::ConfigError;

/// Anchor points and origin slope, as stored in the vehicle config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionSpec<T> {
    /// `[[S_0, F_0], [S_e, F_e], [S_a, F_a]]`
    pub anchors: [[T; 2]; 3],
    pub initial_slope: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionCurve<T> {
    pub origin: [T; 2],
    pub extremum: [T; 2],
    pub asymptote: [T; 2],
    pub initial_slope: T,
    /// `[a, b, c, d]` of `a S^3 + b S^2 + c S + d` for each piece.
    pub coefficients: [[T; 4]; 2],
}

fn hermite_cubic<T: Real>(s0: T, f0: T, m0: T, s1: T, f1: T, m1: T) -> Result<[T; 4], ConfigError> {
    // Rows: f(s0), f(s1), f'(s0), f'(s1) in monomial unknowns (a, b, c, d).
    let mut m = vec![
        s0 * s0 * s0,
        s0 * s0,
        s0,
        T::one(),
        s1 * s1 * s1,
        s1 * s1,
        s1,
        T::one(),
        T::lit(3.0) * s0 * s0,
        T::lit(2.0) * s0,
        T::one(),
        T::zero(),
        T::lit(3.0) * s1 * s1,
        T::lit(2.0) * s1,
        T::one(),
        T::zero(),
    ];
    let mut rhs = vec![f0, f1, m0, m1];
    solve_dense(&mut m, &mut rhs, 4)
        .ok_or_else(|| ConfigError::invalid("friction.anchors", "degenerate spline system"))?;
    Ok([rhs[0], rhs[1], rhs[2], rhs[3]])
}

impl<T: Real> FrictionCurve<T> {
    pub fn fit(spec: &FrictionSpec<T>) -> Result<Self, ConfigError> {
        let [[s0, f0], [se, fe], [sa, fa]] = spec.anchors;
        let all = [s0, f0, se, fe, sa, fa, spec.initial_slope];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::invalid(
                "friction.anchors",
                "values must be finite",
            ));
        }
        if !(s0 >= T::zero() && s0 < se && se < sa) {
            return Err(ConfigError::invalid(
                "friction.anchors",
                "slips must satisfy 0 <= S_0 < S_e < S_a",
            ));
        }
        if fe.abs() < f0.abs() || fe.abs() < fa.abs() {
            return Err(ConfigError::invalid(
                "friction.anchors",
                "F_e must be the extremum",
            ));
        }
        let p0 = hermite_cubic(s0, f0, spec.initial_slope, se, fe, T::zero())?;
        let p1 = hermite_cubic(se, fe, T::zero(), sa, fa, T::zero())?;
        Ok(Self {
            origin: [s0, f0],
            extremum: [se, fe],
            asymptote: [sa, fa],
            initial_slope: spec.initial_slope,
            coefficients: [p0, p1],
        })
    }

    fn piece(&self, s: T) -> Option<&[T; 4]> {
        if s >= self.asymptote[0] {
            None
        } else if s >= self.extremum[0] {
            Some(&self.coefficients[1])
        } else {
            Some(&self.coefficients[0])
        }
    }

    fn eval_pos(&self, s: T) -> T {
        match self.piece(s) {
            None => self.asymptote[1],
            Some(&[a, b, c, d]) => ((a * s + b) * s + c) * s + d,
        }
    }

    fn slope_pos(&self, s: T) -> T {
        match self.piece(s) {
            None => T::zero(),
            Some(&[a, b, c, _]) => (T::lit(3.0) * a * s + T::lit(2.0) * b) * s + c,
        }
    }

    /// Normalized force for slip `s`.
    pub fn eval(&self, s: T) -> T {
        if s < T::zero() {
            -self.eval_pos(-s)
        } else {
            self.eval_pos(s)
        }
    }

    /// `dF/dS`, even in `s`.
    pub fn slope(&self, s: T) -> T {
        self.slope_pos(s.abs())
    }
}
