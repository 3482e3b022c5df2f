//! Compensated phase accumulation.
//!
//! The resonance and lattice modules need `sin(2*pi*t)` where the turn count
//! `t` is a dot product whose partial terms reach 1e9. A plain f64 sum loses
//! the fractional part long before that, so phases are accumulated in
//! double-double form (an unevaluated `hi + lo` pair carrying ~31 digits)
//! and reduced mod 1 at the end. Every module that feeds a large product
//! into a sine goes through [`PhaseTurns`].

/// Unevaluated sum of two floats, |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

/// Exact product a*b = hi + lo via fused multiply-add.
#[inline]
pub fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let e = a.mul_add(b, -p);
    Dd { hi: p, lo: e }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + (self.lo + other.lo);
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn add_f64(self, x: f64) -> Dd {
        let (s, e) = two_sum(self.hi, x);
        let e = e + self.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    /// Product with a plain float, keeping the error term.
    #[inline]
    pub fn mul_f64(self, x: f64) -> Dd {
        let p = two_prod(self.hi, x);
        let e = self.lo.mul_add(x, p.lo);
        let (hi, lo) = quick_two_sum(p.hi, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    /// Fractional part in turns, reduced to (-1/2, 1/2].
    pub fn centered_frac(self) -> f64 {
        let i = self.hi.round();
        // hi - i is exact: both are multiples of ulp(hi) and the difference
        // is at most 1/2 in magnitude.
        let (s, e) = two_sum(self.hi - i, self.lo);
        let mut t = s + e;
        if t <= -0.5 {
            t += 1.0;
        } else if t > 0.5 {
            t -= 1.0;
        }
        t
    }

    /// Fractional part in [0, 1).
    pub fn frac(self) -> f64 {
        let t = self.centered_frac();
        let t = if t < 0.0 { t + 1.0 } else { t };
        // centered_frac can return exactly 1/2 + eps adjustments; clamp the
        // half-open contract.
        if t >= 1.0 {
            t - 1.0
        } else {
            t
        }
    }
}

/// Accumulator for a phase expressed in turns (multiples of 2*pi).
#[derive(Debug, Clone, Copy)]
pub struct PhaseTurns(Dd);

impl PhaseTurns {
    pub fn new() -> Self {
        PhaseTurns(Dd::ZERO)
    }

    /// Add the exact product a*b turns.
    #[inline]
    pub fn add_prod(&mut self, a: f64, b: f64) {
        self.0 = self.0.add(two_prod(a, b));
    }

    #[inline]
    pub fn add_f64(&mut self, x: f64) {
        self.0 = self.0.add_f64(x);
    }

    #[inline]
    pub fn add_dd(&mut self, x: Dd) {
        self.0 = self.0.add(x);
    }

    /// Turns reduced to (-1/2, 1/2].
    pub fn centered(self) -> f64 {
        self.0.centered_frac()
    }

    /// Turns reduced to [0, 1).
    pub fn frac(self) -> f64 {
        self.0.frac()
    }

    pub fn sin(self) -> f64 {
        sin_2pi(self.0.centered_frac())
    }
}

impl Default for PhaseTurns {
    fn default() -> Self {
        Self::new()
    }
}

/// sin(2*pi*t) for |t| <= 1/2.
#[inline]
pub fn sin_2pi(t: f64) -> f64 {
    (2.0 * std::f64::consts::PI * t).sin()
}

/// cos(2*pi*t) for |t| <= 1/2.
#[inline]
pub fn cos_2pi(t: f64) -> f64 {
    (2.0 * std::f64::consts::PI * t).cos()
}

/// Circular distance of x to the nearest multiple of `period`, in [0, period/2].
///
/// Computed through an exact-product reduction so that arguments up to 1e8
/// keep absolute accuracy far below the 1e-6 the resonance search needs.
pub fn circle_dist(x: f64, period: f64) -> f64 {
    let turns = two_prod(x, 1.0 / period);
    // correct the rounding of 1/period: x/period = x*inv + x*(1/period - inv)
    let inv = 1.0 / period;
    let resid = -inv.mul_add(period, -1.0) / period; // (1 - inv*period)/period
    let turns = turns.add(two_prod(x, resid));
    let t = turns.centered_frac();
    (t * period).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_prod_is_exact() {
        let a = 1.1e8_f64;
        let b = std::f64::consts::SQRT_2;
        let p = two_prod(a, b);
        assert_eq!(p.hi, a * b);
        assert_eq!(p.lo, a.mul_add(b, -p.hi));
    }

    #[test]
    fn centered_frac_boundaries() {
        assert_eq!(Dd::from_f64(0.5).centered_frac(), 0.5);
        assert_eq!(Dd::from_f64(-0.5).centered_frac(), 0.5);
        assert_eq!(Dd::from_f64(1.5).centered_frac(), 0.5);
        assert_eq!(Dd::from_f64(0.25).centered_frac(), 0.25);
        assert_eq!(Dd::from_f64(-0.25).centered_frac(), -0.25);
        assert_eq!(Dd::from_f64(3.0).centered_frac(), 0.0);
    }

    #[test]
    fn frac_contract() {
        for &x in &[-2.75, -0.5, 0.0, 0.3, 0.5, 17.25, 1e7 + 0.125] {
            let f = Dd::from_f64(x).frac();
            assert!((0.0..1.0).contains(&f), "frac({x}) = {f}");
            let back = (x - f).round();
            assert!((x - f - back).abs() < 1e-12);
        }
    }

    /// Reference values from 50-digit arithmetic: frac(k * sqrt(2)) for
    /// large k, where the f64 image of sqrt(2) is the exact input.
    #[test]
    fn large_product_fraction_matches_reference() {
        // frac(87654321 * fl(sqrt(2))) with fl(sqrt(2)) = 6369051672525773 * 2^-52
        let k = 87654321.0_f64;
        let s = std::f64::consts::SQRT_2;
        let t = two_prod(k, s).frac();
        // exact: (87654321 * 6369051672525773) mod 2^52 / 2^52
        let num: u128 = 87654321u128 * 6369051672525773u128;
        let frac_exact = (num % (1u128 << 52)) as f64 / (1u128 << 52) as f64;
        assert!((t - frac_exact).abs() < 1e-15, "{t} vs {frac_exact}");
    }

    #[test]
    fn circle_dist_basic() {
        let tau = 2.0 * std::f64::consts::PI;
        assert!(circle_dist(tau, tau) < 1e-12);
        assert!((circle_dist(std::f64::consts::PI, tau) - std::f64::consts::PI).abs() < 1e-12);
        // many periods: 1e8 * sqrt(2) against 2*pi
        let x = 1.0e8 * std::f64::consts::SQRT_2;
        let d = circle_dist(x, tau);
        assert!((0.0..=std::f64::consts::PI + 1e-9).contains(&d));
    }
}
