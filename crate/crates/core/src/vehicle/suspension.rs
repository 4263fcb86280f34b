//! Per-corner vertical dynamics: sprung mass over a wheel, joined by a spring-damper.
//!
//! Heights are absolute (ground at zero). The spring has natural gap
//! `natural_gap` between sprung corner and wheel center and carries the corner
//! weight `preload` at static equilibrium, so the equilibrium gap is
//! `natural_gap - preload / spring_k`.

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuspensionCorner<T> {
    /// N/m
    pub spring_k: T,
    /// N*s/m
    pub damping_b: T,
    /// kg, sprung mass carried by this corner
    pub sprung_mass: T,
    /// kg
    pub wheel_mass: T,
    /// Sprung weight carried at static equilibrium, N.
    pub preload: T,
    /// Unloaded spring gap, m.
    pub natural_gap: T,
    /// Max deflection about equilibrium, m.
    pub travel_limit: T,
    /// `Z`, m
    pub sprung_height: T,
    /// `Z'`, m/s
    pub sprung_rate: T,
    /// `z`, wheel center height, m
    pub wheel_height: T,
    /// `z'`, m/s
    pub wheel_rate: T,
    pub in_contact: bool,
}

impl<T: Real> SuspensionCorner<T> {
    pub fn equilibrium_gap(&self) -> T {
        self.natural_gap - self.preload / self.spring_k
    }

    /// `Z - z` measured from the equilibrium gap.
    pub fn deflection_from_equilibrium(&self) -> T {
        self.sprung_height - self.wheel_height - self.equilibrium_gap()
    }

    /// Spring compression relative to the natural gap (positive when compressed).
    pub fn compression(&self) -> T {
        self.natural_gap - (self.sprung_height - self.wheel_height)
    }

    /// Potential energy of the spring plus gravity on both bodies.
    pub fn potential_energy(&self, gravity: T) -> T {
        let e = self.compression();
        T::lit(0.5) * self.spring_k * e * e
            + gravity
                * (self.sprung_mass * self.sprung_height + self.wheel_mass * self.wheel_height)
    }

    pub fn kinetic_energy(&self) -> T {
        T::lit(0.5)
            * (self.sprung_mass * self.sprung_rate * self.sprung_rate
                + self.wheel_mass * self.wheel_rate * self.wheel_rate)
    }
}

/// `B (Z' - z') + K ((Z - z) - gap_eq)`.
///
/// This is the restoring term of the sprung-mass equation evaluated about
/// static equilibrium: it pulls the wheel up and the sprung mass down when
/// positive. The force on the sprung mass is its negative.
pub fn suspension_force<T: Real>(c: &SuspensionCorner<T>) -> T {
    c.damping_b * (c.sprung_rate - c.wheel_rate) + c.spring_k * c.deflection_from_equilibrium()
}

/// Wheel vertical acceleration `(-B (z' - Z') - K (z - Z) - m g + N) / m`.
///
/// `(z - Z)` is taken relative to the natural gap, so an unloaded spring exerts
/// no force. The ground is a unilateral constraint at `z = radius`: when the
/// wheel rests on it, the contact force `N >= 0` cancels any net downward pull.
pub fn wheel_vertical_accel<T: Real>(c: &SuspensionCorner<T>, gravity: T, radius: T) -> T {
    let spring_up = c.damping_b * (c.sprung_rate - c.wheel_rate)
        + c.spring_k * (c.sprung_height - c.wheel_height - c.natural_gap);
    let free = (spring_up - c.wheel_mass * gravity) / c.wheel_mass;
    let grounded = c.wheel_height <= radius && c.wheel_rate <= T::zero();
    if grounded && free < T::zero() {
        T::zero()
    } else {
        free
    }
}

/// Result of one implicit vertical step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VerticalStep<T> {
    pub corner: SuspensionCorner<T>,
    /// Ground reaction on the wheel, N (zero when airborne).
    pub contact_force: T,
}

/// Backward-Euler update of one corner with the ground constraint and travel stop.
///
/// For the linear spring-damper this update never increases the corner energy.
pub(crate) fn step_corner<T: Real>(
    c: &SuspensionCorner<T>,
    gravity: T,
    radius: T,
    dt: T,
) -> VerticalStep<T> {
    let (ms, mw) = (c.sprung_mass, c.wheel_mass);
    let k = c.spring_k;
    let cc = c.damping_b + k * dt;
    // spring pull on the wheel at the start of the step
    let e = c.sprung_height - c.wheel_height - c.natural_gap;
    let rs = ms * c.sprung_rate + dt * (-k * e - ms * gravity);
    let rw = mw * c.wheel_rate + dt * (k * e - mw * gravity);

    // free solve: [ms + dt cc, -dt cc; -dt cc, mw + dt cc] [V; v] = [rs; rw]
    let a11 = ms + dt * cc;
    let a22 = mw + dt * cc;
    let a12 = -dt * cc;
    let det = a11 * a22 - a12 * a12;
    let mut vs = (rs * a22 - a12 * rw) / det;
    let mut vw = (a11 * rw - a12 * rs) / det;
    let mut contact = T::zero();
    let mut in_contact = false;

    if c.wheel_height + dt * vw < radius {
        vw = (radius - c.wheel_height) / dt;
        vs = (rs + dt * cc * vw) / a11;
        let spring_up = cc * (vs - vw) + k * e;
        contact = (mw * (vw - c.wheel_rate) / dt - spring_up + mw * gravity).max(T::zero());
        in_contact = true;
    }

    let mut out = *c;
    out.sprung_height = c.sprung_height + dt * vs;
    out.sprung_rate = vs;
    if in_contact {
        out.wheel_height = radius;
        out.wheel_rate = T::zero();
    } else {
        out.wheel_height = c.wheel_height + dt * vw;
        out.wheel_rate = vw;
    }
    out.in_contact = in_contact;

    // inelastic travel stop
    let dev = out.deflection_from_equilibrium();
    if dev.abs() > c.travel_limit {
        let lim = if dev > T::zero() {
            c.travel_limit
        } else {
            -c.travel_limit
        };
        out.sprung_height = out.wheel_height + out.equilibrium_gap() + lim;
        let v = if in_contact {
            T::zero()
        } else {
            (ms * out.sprung_rate + mw * out.wheel_rate) / (ms + mw)
        };
        out.sprung_rate = v;
        out.wheel_rate = v;
    }

    VerticalStep {
        corner: out,
        contact_force: contact,
    }
}
