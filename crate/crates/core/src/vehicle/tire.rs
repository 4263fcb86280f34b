use crate::num::Real;
use crate::vehicle::friction::FrictionCurve;

/// Longitudinal and lateral slip from tire-frame velocities.
///
/// `S_x = (r w - v_x) / max(|v_x|, eps)`, `S_y = v_y / max(|v_x|, eps)`.
/// `S_y` is the tangent of the slip angle.
pub fn slip<T: Real>(radius: T, omega: T, v_x: T, v_y: T, eps: T) -> (T, T) {
    let d = v_x.abs().max(eps);
    ((radius * omega - v_x) / d, v_y / d)
}

/// Tire-frame forces. The lateral force opposes sideslip.
pub fn tire_force<T: Real>(
    curve_x: &FrictionCurve<T>,
    curve_y: &FrictionCurve<T>,
    s_x: T,
    s_y: T,
    normal_load: T,
) -> (T, T) {
    if normal_load <= T::zero() {
        return (T::zero(), T::zero());
    }
    (
        normal_load * curve_x.eval(s_x),
        -normal_load * curve_y.eval(s_y),
    )
}
