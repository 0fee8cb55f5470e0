//! Radial weight for the monotonicity density.
//!
//! The density at scale `r` integrates the energy against
//! `phi(|y-x|^2 / r^2)`. Any weight works as long as it is nonincreasing,
//! supported in `[0, 10)`, equals 60 at zero, stays >= 1 with slope in
//! `[-2, -1]` on `[0, 8]`, and has slope bounded by 100 everywhere. The
//! concrete choice here is linear on `[0, 8]` with a quintic Hermite tail
//! that reaches zero at 10 with vanishing slope and curvature.

/// Weight `phi` with derivative access.
#[derive(Debug, Clone, Copy, Default)]
pub struct WeightPhi;

// Tail polynomial in u = (t - 8) / 2 on [0, 1], interpolating value 48,
// slope -3 (u-units), curvature 0 at u = 0 and value/slope/curvature 0 at
// u = 1:  p(u) = 48 - 3u - 462 u^3 + 696 u^4 - 279 u^5.
fn tail(u: f64) -> f64 {
    48.0 + u * (-3.0 + u * u * (-462.0 + u * (696.0 - 279.0 * u)))
}

fn tail_deriv(u: f64) -> f64 {
    -3.0 + u * u * (-1386.0 + u * (2784.0 - 1395.0 * u))
}

impl WeightPhi {
    pub fn new() -> Self {
        WeightPhi
    }

    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        if t < 8.0 {
            60.0 - 1.5 * t
        } else if t < 10.0 {
            tail((t - 8.0) / 2.0).clamp(0.0, 48.0)
        } else {
            0.0
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        if t < 8.0 {
            -1.5
        } else if t < 10.0 {
            0.5 * tail_deriv((t - 8.0) / 2.0)
        } else {
            0.0
        }
    }
}

/// The default weight construction.
pub fn make_phi() -> WeightPhi {
    WeightPhi::new()
}

/// `\int_{R^3} phi(|z|^2) dz`, by 1D quadrature of the radial profile.
/// Used to normalize analytic cross-checks of the density.
pub fn phi_volume_integral(phi: &WeightPhi) -> f64 {
    // Simpson on [0, sqrt(10)] for 4 pi \int phi(u^2) u^2 du.
    let upper = 10.0f64.sqrt();
    let n = 4000;
    let h = upper / n as f64;
    let f = |u: f64| phi.eval(u * u) * u * u;
    let mut s = f(0.0) + f(upper);
    for i in 1..n {
        let u = i as f64 * h;
        s += f(u) * if i % 2 == 0 { 2.0 } else { 4.0 };
    }
    4.0 * std::f64::consts::PI * s * h / 3.0
}
