//! Phase angle wrapping and unwrapping.
//!
//! All engine internals carry angles in radians. Wrapped angles live in
//! (-pi, pi]; unwrapped angles are continuous and may grow without bound.
//! File interfaces convert to degrees at the edge, nowhere else.

use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Wraps an angle in radians onto (-pi, pi].
pub fn wrap_to_pi(theta: f64) -> f64 {
    let mut w = theta % TWO_PI;
    if w > PI {
        w -= TWO_PI;
    } else if w <= -PI {
        w += TWO_PI;
    }
    w
}

/// Selects the representative of `new_wrapped` (mod 2pi) nearest to
/// `prev_unwrapped`, so that consecutive unwrapped samples never differ by
/// more than pi. Total for all finite inputs.
pub fn unwrap_angle(prev_unwrapped: f64, new_wrapped: f64) -> f64 {
    prev_unwrapped + wrap_to_pi(new_wrapped - prev_unwrapped)
}

/// Degrees to radians.
pub fn deg_to_rad(deg: f64) -> f64 {
    deg * PI / 180.0
}

/// Radians to degrees.
pub fn rad_to_deg(rad: f64) -> f64 {
    rad * 180.0 / PI
}

// ---------------------------------------------------------------------------
