//! Score functions for M-estimation of a location.
//!
//! Three families are supported, each parameterised by a truncation scale
//! `beta > 0`:
//!
//! | family     | psi(x)                              | growth     |
//! |------------|-------------------------------------|------------|
//! | Huber      | `min(x, beta)`                      | bounded    |
//! | Catoni     | `beta * ln(1 + x/beta + x^2/(2 beta^2))` | logarithmic |
//! | Polynomial | `x / (1 + (x/beta)^(1 - 1/p))`      | `x^(1/p)`  |
//!
//! All three are concave and nondecreasing with `psi(0) = 0`, and satisfy
//! `gamma * 1{x <= beta} <= psi'(x) <= 1` with the family constant returned by
//! [`ScoreFamily::gamma`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Huber,
    Catoni,
    Polynomial,
}

impl ScoreKind {
    /// Squared-bias constant used by the beta selection criterion.
    pub fn bias_constant(self) -> f64 {
        match self {
            ScoreKind::Huber => 1.0,
            ScoreKind::Catoni => 5.0 / 32.0,
            ScoreKind::Polynomial => 1.0 / 16.0,
        }
    }

    /// Lower bound on `psi'` over `[0, beta]`.
    pub fn gamma(self) -> f64 {
        match self {
            ScoreKind::Huber => 1.0,
            ScoreKind::Catoni => 0.8,
            ScoreKind::Polynomial => 0.25,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Huber => "huber",
            ScoreKind::Catoni => "catoni",
            ScoreKind::Polynomial => "poly",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "huber" => Ok(ScoreKind::Huber),
            "catoni" => Ok(ScoreKind::Catoni),
            "poly" | "polynomial" => Ok(ScoreKind::Polynomial),
            other => Err(Error::invalid(format!("unknown score family `{other}`"))),
        }
    }
}

/// A score function `psi` together with its scale `beta`.
///
/// `p` is only meaningful for [`ScoreKind::Polynomial`]; it is kept at 1 for
/// the other families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreFamily {
    kind: ScoreKind,
    beta: f64,
    p: u32,
}

/// Relative tolerance of the adaptive quadrature behind [`ScoreFamily::rho`].
const RHO_REL_TOL: f64 = 1e-10;

impl ScoreFamily {
    pub fn new(kind: ScoreKind, beta: f64, p: u32) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        let p = match kind {
            ScoreKind::Polynomial if p == 0 => {
                return Err(Error::invalid("polynomial exponent p must be >= 1"));
            }
            ScoreKind::Polynomial => p,
            _ => 1,
        };
        Ok(Self { kind, beta, p })
    }

    pub fn huber(beta: f64) -> Result<Self> {
        Self::new(ScoreKind::Huber, beta, 1)
    }

    pub fn catoni(beta: f64) -> Result<Self> {
        Self::new(ScoreKind::Catoni, beta, 1)
    }

    pub fn polynomial(beta: f64, p: u32) -> Result<Self> {
        Self::new(ScoreKind::Polynomial, beta, p)
    }

    /// Same family and exponent, different scale.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.kind, beta, self.p)
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.kind.gamma()
    }

    pub fn psi(&self, x: f64) -> Result<f64> {
        check_nonnegative("x", x)?;
        Ok(self.psi_unchecked(x))
    }

    pub fn psi_prime(&self, x: f64) -> Result<f64> {
        check_nonnegative("x", x)?;
        Ok(self.psi_prime_unchecked(x))
    }

    /// `rho(x) = int_0^x psi(t) dt`.
    ///
    /// Closed form for Huber; adaptive Simpson quadrature otherwise.
    pub fn rho(&self, x: f64) -> Result<f64> {
        check_nonnegative("x", x)?;
        Ok(self.rho_unchecked(x))
    }

    /// Re-weighting weight `psi(r) / r`, with the limit `psi'(0)` at `r = 0`.
    #[inline]
    pub fn weight(&self, r: f64) -> f64 {
        if r > 0.0 {
            self.psi_unchecked(r) / r
        } else {
            self.psi_prime_unchecked(0.0)
        }
    }

    /// Inverse of `psi` on its range; `+inf` when `y` is at or above the
    /// supremum of a bounded score.
    pub fn psi_inverse(&self, y: f64) -> Result<f64> {
        check_nonnegative("y", y)?;
        let b = self.beta;
        Ok(match self.kind {
            ScoreKind::Huber => {
                if y < b {
                    y
                } else if y == b {
                    b
                } else {
                    f64::INFINITY
                }
            }
            // 1 + t + t^2/2 = e^{y/b}  =>  t = -1 + sqrt(2 e^{y/b} - 1)
            ScoreKind::Catoni => b * (-1.0 + (2.0 * (y / b).exp() - 1.0).sqrt()),
            ScoreKind::Polynomial => {
                if y == 0.0 {
                    return Ok(0.0);
                }
                // psi is increasing and unbounded; psi(x) >= x/2 below beta and
                // psi(x) >= (x beta^(1-1/p))^(1/p) / 2 above it, so bracket by doubling.
                let mut hi = y.max(b);
                while self.psi_unchecked(hi) < y {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.psi_unchecked(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        })
    }

    #[inline]
    pub(crate) fn psi_unchecked(&self, x: f64) -> f64 {
        let b = self.beta;
        match self.kind {
            ScoreKind::Huber => x.min(b),
            ScoreKind::Catoni => {
                let t = x / b;
                b * (t + 0.5 * t * t).ln_1p()
            }
            ScoreKind::Polynomial => x / (1.0 + self.poly_power(x)),
        }
    }

    #[inline]
    pub(crate) fn psi_prime_unchecked(&self, x: f64) -> f64 {
        let b = self.beta;
        match self.kind {
            // left derivative at the kink
            ScoreKind::Huber => {
                if x <= b {
                    1.0
                } else {
                    0.0
                }
            }
            ScoreKind::Catoni => {
                let t = x / b;
                (1.0 + t) / (1.0 + t + 0.5 * t * t)
            }
            ScoreKind::Polynomial => {
                let u = self.poly_power(x);
                (1.0 + u / self.p as f64) / ((1.0 + u) * (1.0 + u))
            }
        }
    }

    /// `(x / beta)^(1 - 1/p)`, with `0^0 = 1` for `p = 1`.
    #[inline]
    fn poly_power(&self, x: f64) -> f64 {
        if self.p == 1 {
            1.0
        } else {
            (x / self.beta).powf(1.0 - 1.0 / self.p as f64)
        }
    }

    pub(crate) fn rho_unchecked(&self, x: f64) -> f64 {
        let b = self.beta;
        match self.kind {
            ScoreKind::Huber => {
                if x <= b {
                    0.5 * x * x
                } else {
                    b * x - 0.5 * b * b
                }
            }
            _ => adaptive_simpson(|t| self.psi_unchecked(t), 0.0, x, RHO_REL_TOL),
        }
    }
}

fn check_nonnegative(what: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { what, value })
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
///
/// The tolerance is relative to a coarse estimate of the integral, with an
/// absolute floor so that integrals of (nearly) zero terminate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = (rel_tol * whole.abs()).max(f64::MIN_POSITIVE);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn families(beta: f64) -> Vec<ScoreFamily> {
        vec![
            ScoreFamily::huber(beta).unwrap(),
            ScoreFamily::catoni(beta).unwrap(),
            ScoreFamily::polynomial(beta, 1).unwrap(),
            ScoreFamily::polynomial(beta, 5).unwrap(),
        ]
    }

    #[test]
    fn psi_reference_values() {
        let h = ScoreFamily::huber(1.0).unwrap();
        assert_eq!(h.psi(0.5).unwrap(), 0.5);
        assert_eq!(h.psi(2.0).unwrap(), 1.0);
        let c = ScoreFamily::catoni(1.0).unwrap();
        assert_relative_eq!(c.psi(1.0).unwrap(), 2.5f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(c.psi(1.0).unwrap(), 0.9162907, epsilon = 1e-7);
        let p = ScoreFamily::polynomial(1.0, 1).unwrap();
        assert_relative_eq!(p.psi(3.0).unwrap(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn psi_prime_reference_values() {
        let h = ScoreFamily::huber(1.0).unwrap();
        assert_eq!(h.psi_prime(0.3).unwrap(), 1.0);
        assert_eq!(h.psi_prime(1.0).unwrap(), 1.0);
        assert_eq!(h.psi_prime(1.5).unwrap(), 0.0);
        let c = ScoreFamily::catoni(1.0).unwrap();
        assert_relative_eq!(c.psi_prime(1.0).unwrap(), 0.8, epsilon = 1e-15);
        let p = ScoreFamily::polynomial(1.0, 5).unwrap();
        assert_relative_eq!(p.psi_prime(1.0).unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn gamma_constants() {
        assert_eq!(ScoreKind::Huber.gamma(), 1.0);
        assert_eq!(ScoreKind::Catoni.gamma(), 0.8);
        assert_eq!(ScoreKind::Polynomial.gamma(), 0.25);
    }

    #[test]
    fn negative_arguments_are_rejected() {
        for f in families(1.0) {
            assert!(matches!(f.psi(-1.0), Err(Error::Domain { .. })));
            assert!(matches!(f.psi_prime(-1e-12), Err(Error::Domain { .. })));
            assert!(matches!(f.rho(-3.0), Err(Error::Domain { .. })));
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ScoreFamily::huber(0.0).is_err());
        assert!(ScoreFamily::catoni(-1.0).is_err());
        assert!(ScoreFamily::catoni(f64::NAN).is_err());
        assert!(ScoreFamily::polynomial(1.0, 0).is_err());
    }

    #[test]
    fn huber_rho_closed_form() {
        let h = ScoreFamily::huber(1.0).unwrap();
        assert_eq!(h.rho(0.5).unwrap(), 0.125);
        assert_eq!(h.rho(3.0).unwrap(), 2.5);
    }

    /// Midpoint Riemann sum with a million cells; independent of the
    /// adaptive quadrature used in production.
    fn riemann(f: &ScoreFamily, x: f64) -> f64 {
        let cells = 1_000_000;
        let h = x / cells as f64;
        (0..cells)
            .map(|k| f.psi_unchecked((k as f64 + 0.5) * h))
            .sum::<f64>()
            * h
    }

    #[test]
    fn rho_matches_riemann_oracle() {
        let c = ScoreFamily::catoni(1.0).unwrap();
        let v = c.rho(1.0).unwrap();
        assert!((v - riemann(&c, 1.0)).abs() <= 1e-9, "{v}");
        // closed form of int_0^1 ln(1 + t + t^2/2) dt, for the record
        let closed = {
            // antiderivative: (t+1) ln(1+t+t^2/2) - 2t + 2 atan(t+1)
            let g = |t: f64| (t + 1.0) * (1.0 + t + 0.5 * t * t).ln() - 2.0 * t + 2.0 * (t + 1.0).atan();
            g(1.0) - g(0.0)
        };
        assert!((v - closed).abs() <= 1e-10, "{v} vs {closed}");

        for f in [
            ScoreFamily::polynomial(2.0, 5).unwrap(),
            ScoreFamily::catoni(0.5).unwrap(),
        ] {
            for x in [0.3, 2.0, 7.5] {
                let v = f.rho(x).unwrap();
                let r = riemann(&f, x);
                assert!((v - r).abs() <= 1e-9 * r.max(1.0), "{f:?} {x}: {v} vs {r}");
            }
        }
    }

    #[test]
    fn weight_limits() {
        let h = ScoreFamily::huber(1.0).unwrap();
        assert_eq!(h.weight(0.0), 1.0);
        assert_eq!(h.weight(4.0), 0.25);
        let c = ScoreFamily::catoni(1.0).unwrap();
        assert_relative_eq!(c.weight(1.0), 2.5f64.ln(), epsilon = 1e-15);
        assert_eq!(c.weight(0.0), 1.0);
        assert_eq!(ScoreFamily::polynomial(1.0, 5).unwrap().weight(0.0), 1.0);
        // p = 1 is the half-identity, whose slope at zero is 1/2
        assert_eq!(ScoreFamily::polynomial(1.0, 1).unwrap().weight(0.0), 0.5);
    }

    #[test]
    fn random_shape_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for beta in [0.5, 1.0, 10.0] {
            for f in families(beta) {
                let mut xs: Vec<f64> = (0..10_000)
                    .map(|_| {
                        let u: f64 = rng.random();
                        // spread samples over several decades around beta
                        beta * 10f64.powf(4.0 * u - 2.0)
                    })
                    .collect();
                xs.push(0.0);
                xs.sort_by(f64::total_cmp);
                let sup = match f.kind() {
                    ScoreKind::Huber => beta,
                    _ => f64::INFINITY,
                };
                let gamma = f.gamma();
                let mut prev_psi = 0.0;
                let mut prev_w = f64::INFINITY;
                for &x in &xs {
                    let psi = f.psi(x).unwrap();
                    assert!(psi >= 0.0 && psi <= x.min(sup) + 1e-12 * x, "{f:?} {x}");
                    assert!(psi >= prev_psi, "psi decreasing at {x}");
                    let w = f.weight(x);
                    assert!(w > 0.0 && w <= 1.0);
                    assert!(w <= prev_w + 1e-15, "weight increasing at {x}");
                    let d = f.psi_prime(x).unwrap();
                    assert!(d <= 1.0);
                    if x <= beta {
                        assert!(d >= gamma - 1e-15, "{f:?} psi'({x}) = {d}");
                    } else {
                        assert!(d >= 0.0);
                    }
                    prev_psi = psi;
                    prev_w = w;
                }
            }
        }
    }

    #[test]
    fn finite_difference_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for f in families(1.0).into_iter().chain(families(3.0)) {
            for _ in 0..100 {
                let x: f64 = rng.random_range(0.01..5.0);
                if f.kind() == ScoreKind::Huber && (x - f.beta()).abs() < 1e-3 {
                    continue;
                }
                let fd = (f.psi(x + h).unwrap() - f.psi(x - h).unwrap()) / (2.0 * h);
                let d = f.psi_prime(x).unwrap();
                assert!((d - fd).abs() <= 1e-6, "{f:?} at {x}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn psi_inverse_round_trips() {
        for f in families(2.0) {
            for x in [0.0, 0.1, 1.0, 1.9, 5.0, 40.0] {
                if f.kind() == ScoreKind::Huber && x > f.beta() {
                    assert!(f.psi_inverse(f.psi(x).unwrap() * 1.0001).unwrap().is_infinite());
                    continue;
                }
                let y = f.psi(x).unwrap();
                let back = f.psi_inverse(y).unwrap();
                assert!((back - x).abs() <= 1e-9 * (1.0 + x), "{f:?} {x} -> {back}");
            }
        }
    }

    proptest! {
        #[test]
        fn concave_on_random_pairs(a in 0.0f64..50.0, b in 0.0f64..50.0, beta in 0.1f64..20.0) {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            for f in families(beta) {
                let mid = f.psi(0.5 * (a + b)).unwrap();
                let chord = 0.5 * (f.psi(a).unwrap() + f.psi(b).unwrap());
                prop_assert!(mid >= chord - 1e-12 * (1.0 + chord));
                prop_assert!(f.psi(a).unwrap() <= f.psi(b).unwrap());
            }
        }

        #[test]
        fn scaling_identity(x in 0.0f64..1e3, b in 0.01f64..100.0) {
            for f in families(b) {
                let unit = f.with_beta(1.0).unwrap();
                let lhs = f.psi(x).unwrap();
                let rhs = b * unit.psi(x / b).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{:?}: {} vs {}", f, lhs, rhs);
            }
        }

        #[test]
        fn psi_squared_below_twice_rho(x in 0.0f64..30.0, beta in 0.2f64..10.0) {
            for f in families(beta) {
                let psi = f.psi(x).unwrap();
                let rho = f.rho(x).unwrap();
                prop_assert!(psi * psi <= 2.0 * rho * (1.0 + 1e-9) + 1e-300);
            }
        }
    }
}
