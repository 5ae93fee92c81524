//! Sublinear generators.
//!
//! A [`VolatilityBand`] `[σ̲², σ̄²]` defines `G(a) = ½(σ̄²a⁺ − σ̲²a⁻)`. The
//! perturbed generator `G_ε(a) = G(a) + ½ε²a` shifts the band to
//! `[σ̲²+ε², σ̄²+ε²]`, and a [`DominatedGenerator`] is a piecewise-linear `G̃`
//! with `G̃(0) = 0` whose slopes all lie in `[σ̲²/2, σ̄²/2]`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probe tolerance for `G̃(a) − G̃(b) ≤ G(a − b)`.
pub const DOMINATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBand", into = "RawBand")]
pub struct VolatilityBand {
    sigma_lower_sq: f64,
    sigma_upper_sq: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBand {
    sigma_lower_sq: f64,
    sigma_upper_sq: f64,
}

impl TryFrom<RawBand> for VolatilityBand {
    type Error = Error;

    fn try_from(raw: RawBand) -> Result<Self> {
        VolatilityBand::new(raw.sigma_lower_sq, raw.sigma_upper_sq)
    }
}

impl From<VolatilityBand> for RawBand {
    fn from(band: VolatilityBand) -> Self {
        RawBand {
            sigma_lower_sq: band.sigma_lower_sq,
            sigma_upper_sq: band.sigma_upper_sq,
        }
    }
}

impl VolatilityBand {
    pub fn new(sigma_lower_sq: f64, sigma_upper_sq: f64) -> Result<Self> {
        if !sigma_lower_sq.is_finite() || !sigma_upper_sq.is_finite() {
            return Err(Error::config("volatility band must be finite"));
        }
        if sigma_upper_sq <= 0.0 {
            return Err(Error::config(format!(
                "band requires sigma_upper_sq > 0, got {sigma_upper_sq}"
            )));
        }
        if sigma_lower_sq < 0.0 || sigma_lower_sq > sigma_upper_sq {
            return Err(Error::config(format!(
                "band requires 0 <= sigma_lower_sq <= sigma_upper_sq, got [{sigma_lower_sq}, {sigma_upper_sq}]"
            )));
        }
        Ok(Self {
            sigma_lower_sq,
            sigma_upper_sq,
        })
    }

    /// Classical band `σ̲ = σ̄ = σ`.
    pub fn degenerate(sigma_sq: f64) -> Result<Self> {
        Self::new(sigma_sq, sigma_sq)
    }

    pub fn sigma_lower_sq(&self) -> f64 {
        self.sigma_lower_sq
    }

    pub fn sigma_upper_sq(&self) -> f64 {
        self.sigma_upper_sq
    }

    pub fn sigma_lower(&self) -> f64 {
        self.sigma_lower_sq.sqrt()
    }

    pub fn sigma_upper(&self) -> f64 {
        self.sigma_upper_sq.sqrt()
    }

    /// `α = σ̲² / (2σ̄²)`, the exponent of the small-ball density bound.
    pub fn alpha(&self) -> f64 {
        self.sigma_lower_sq / (2.0 * self.sigma_upper_sq)
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_lower_sq == self.sigma_upper_sq
    }

    /// `σ ∈ [σ̲, σ̄]` up to `tol`.
    pub fn contains_sigma(&self, sigma: f64, tol: f64) -> bool {
        sigma >= self.sigma_lower() - tol && sigma <= self.sigma_upper() + tol
    }
}

/// A scalar nonlinearity `H` driving `∂_t u = H(∂²_xx u)`.
///
/// Implementors must be nondecreasing with `H(0) = 0`; `max_slope` bounds the
/// derivative and fixes the explicit-scheme CFL limit `dt ≤ dx² / (2·max_slope)`.
pub trait Nonlinearity: Send + Sync {
    fn eval(&self, a: f64) -> f64;

    fn max_slope(&self) -> f64;

    fn min_slope(&self) -> f64;

    /// `σ̄²_eff = 2·max_slope`, the variance that enters the CFL condition.
    fn effective_upper_variance(&self) -> f64 {
        2.0 * self.max_slope()
    }
}

impl<T: Nonlinearity + ?Sized> Nonlinearity for &T {
    fn eval(&self, a: f64) -> f64 {
        (**self).eval(a)
    }
    fn max_slope(&self) -> f64 {
        (**self).max_slope()
    }
    fn min_slope(&self) -> f64 {
        (**self).min_slope()
    }
}

/// `G(a) = ½(σ̄²a⁺ − σ̲²a⁻)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SublinearGenerator {
    pub band: VolatilityBand,
}

impl SublinearGenerator {
    pub fn new(band: VolatilityBand) -> Self {
        Self { band }
    }

    #[inline]
    pub fn eval_g(&self, a: f64) -> f64 {
        if a >= 0.0 {
            0.5 * self.band.sigma_upper_sq * a
        } else {
            0.5 * self.band.sigma_lower_sq * a
        }
    }

    /// `G_ε(a) = G(a) + ½ε²a`.
    pub fn eval_epsilon(&self, a: f64, eps: f64) -> Result<f64> {
        if !(eps >= 0.0) {
            return Err(Error::argument(format!("eps must be >= 0, got {eps}")));
        }
        Ok(self.eval_g(a) + 0.5 * eps * eps * a)
    }

    pub fn perturbed(&self, eps: f64) -> Result<Perturbed> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::argument(format!("eps must be >= 0, got {eps}")));
        }
        Ok(Perturbed { base: *self, eps })
    }

    /// `G` written as a two-segment [`DominatedGenerator`].
    pub fn as_dominated(&self) -> DominatedGenerator {
        DominatedGenerator::new(
            vec![0.0],
            vec![0.5 * self.band.sigma_lower_sq, 0.5 * self.band.sigma_upper_sq],
            self.band,
        )
        .expect("two-segment encoding of G is structurally valid")
    }
}

impl Nonlinearity for SublinearGenerator {
    #[inline]
    fn eval(&self, a: f64) -> f64 {
        self.eval_g(a)
    }
    fn max_slope(&self) -> f64 {
        0.5 * self.band.sigma_upper_sq
    }
    fn min_slope(&self) -> f64 {
        0.5 * self.band.sigma_lower_sq
    }
}

/// `G_ε`, the generator of `M + εW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbed {
    pub base: SublinearGenerator,
    pub eps: f64,
}

impl Nonlinearity for Perturbed {
    #[inline]
    fn eval(&self, a: f64) -> f64 {
        self.base.eval_g(a) + 0.5 * self.eps * self.eps * a
    }
    fn max_slope(&self) -> f64 {
        0.5 * (self.base.band.sigma_upper_sq + self.eps * self.eps)
    }
    fn min_slope(&self) -> f64 {
        0.5 * (self.base.band.sigma_lower_sq + self.eps * self.eps)
    }
}

/// Piecewise-linear `G̃` anchored at `G̃(0) = 0`.
///
/// `slopes[k]` applies on `(breakpoints[k-1], breakpoints[k])`, with the first
/// and last slopes extended to ±∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTilde", into = "RawTilde")]
pub struct DominatedGenerator {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    band: VolatilityBand,
    // G̃ at each breakpoint.
    anchors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTilde {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    band: VolatilityBand,
}

impl TryFrom<RawTilde> for DominatedGenerator {
    type Error = Error;

    fn try_from(raw: RawTilde) -> Result<Self> {
        DominatedGenerator::new(raw.breakpoints, raw.slopes, raw.band)
    }
}

impl From<DominatedGenerator> for RawTilde {
    fn from(g: DominatedGenerator) -> Self {
        RawTilde {
            breakpoints: g.breakpoints,
            slopes: g.slopes,
            band: g.band,
        }
    }
}

/// First violation found by [`DominatedGenerator::check_domination`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DominationViolation {
    Origin {
        value: f64,
    },
    Slope {
        segment: usize,
        slope: f64,
        lower: f64,
        upper: f64,
    },
    Probe {
        a: f64,
        b: f64,
        difference: f64,
        g_of_difference: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationCheck {
    pub dominated: bool,
    pub violation: Option<DominationViolation>,
}

impl DominatedGenerator {
    /// Structural validation only (ordering, lengths, finiteness). Slopes
    /// outside the band are accepted here so [`Self::check_domination`] can
    /// report them; consumers call [`Self::validate`].
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, band: VolatilityBand) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::config(format!(
                "dominated generator needs breakpoints.len() + 1 slopes, got {} breakpoints and {} slopes",
                breakpoints.len(),
                slopes.len()
            )));
        }
        if breakpoints.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err(Error::config("dominated generator parameters must be finite"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "dominated generator breakpoints must be strictly ascending",
            ));
        }
        let anchors = Self::anchor_values(&breakpoints, &slopes);
        Ok(Self {
            breakpoints,
            slopes,
            band,
            anchors,
        })
    }

    /// Three segments split at ±1 with slopes `σ̲²/2 + θ(σ̄² − σ̲²)/2` for
    /// `θ = 0.2, 0.6, 1`; convex and not positively homogeneous. On the band
    /// (0.25, 1) the slopes are (0.2, 0.35, 0.5).
    pub fn default_three_segment(band: VolatilityBand) -> Result<Self> {
        let (lo, hi) = (0.5 * band.sigma_lower_sq(), 0.5 * band.sigma_upper_sq());
        let slopes = [0.2, 0.6, 1.0].iter().map(|t| t * hi + (1.0 - t) * lo).collect();
        let g = Self::new(vec![-1.0, 1.0], slopes, band)?;
        g.validate()?;
        Ok(g)
    }

    fn anchor_values(breakpoints: &[f64], slopes: &[f64]) -> Vec<f64> {
        let n = breakpoints.len();
        let mut anchors = vec![0.0; n];
        // Segment containing the origin.
        let j0 = breakpoints.partition_point(|&b| b <= 0.0);
        if j0 < n {
            anchors[j0] = slopes[j0] * breakpoints[j0];
            for k in j0 + 1..n {
                anchors[k] = anchors[k - 1] + slopes[k] * (breakpoints[k] - breakpoints[k - 1]);
            }
        }
        if j0 > 0 {
            anchors[j0 - 1] = slopes[j0] * breakpoints[j0 - 1];
            for k in (0..j0 - 1).rev() {
                anchors[k] = anchors[k + 1] - slopes[k + 1] * (breakpoints[k + 1] - breakpoints[k]);
            }
        }
        anchors
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn band(&self) -> VolatilityBand {
        self.band
    }

    #[inline]
    pub fn eval_tilde(&self, a: f64) -> f64 {
        if self.breakpoints.is_empty() {
            return self.slopes[0] * a;
        }
        let j = self.breakpoints.partition_point(|&b| b <= a);
        if j == 0 {
            self.anchors[0] + self.slopes[0] * (a - self.breakpoints[0])
        } else {
            self.anchors[j - 1] + self.slopes[j] * (a - self.breakpoints[j - 1])
        }
    }

    /// Exact slope-interval test: every slope in `[σ̲²/2, σ̄²/2]`.
    pub fn slope_violation(&self) -> Option<DominationViolation> {
        let lower = 0.5 * self.band.sigma_lower_sq();
        let upper = 0.5 * self.band.sigma_upper_sq();
        self.slopes
            .iter()
            .enumerate()
            .find(|(_, &s)| s < lower || s > upper)
            .map(|(segment, &slope)| DominationViolation::Slope {
                segment,
                slope,
                lower,
                upper,
            })
    }

    /// `G̃(0) = 0`, the slope interval, and `G̃(a) − G̃(b) ≤ G(a − b)` on every
    /// probe pair (within [`DOMINATION_TOL`]).
    pub fn check_domination(&self, probes: &[(f64, f64)]) -> Result<DominationCheck> {
        if probes.is_empty() {
            return Err(Error::argument("check_domination needs at least one probe pair"));
        }
        let at_zero = self.eval_tilde(0.0);
        if at_zero != 0.0 {
            return Ok(DominationCheck {
                dominated: false,
                violation: Some(DominationViolation::Origin { value: at_zero }),
            });
        }
        if let Some(v) = self.slope_violation() {
            return Ok(DominationCheck {
                dominated: false,
                violation: Some(v),
            });
        }
        let g = SublinearGenerator::new(self.band);
        for &(a, b) in probes {
            let difference = self.eval_tilde(a) - self.eval_tilde(b);
            let g_of_difference = g.eval_g(a - b);
            if difference > g_of_difference + DOMINATION_TOL {
                return Ok(DominationCheck {
                    dominated: false,
                    violation: Some(DominationViolation::Probe {
                        a,
                        b,
                        difference,
                        g_of_difference,
                    }),
                });
            }
        }
        Ok(DominationCheck {
            dominated: true,
            violation: None,
        })
    }

    /// Error unless the generator is dominated by `G` (slope test plus a
    /// symmetric probe grid).
    pub fn validate(&self) -> Result<()> {
        let check = self.check_domination(&default_probe_pairs())?;
        match check.violation {
            None => Ok(()),
            Some(v) => Err(Error::config(format!("G̃ is not dominated by G: {v:?}"))),
        }
    }
}

impl Nonlinearity for DominatedGenerator {
    #[inline]
    fn eval(&self, a: f64) -> f64 {
        self.eval_tilde(a)
    }
    fn max_slope(&self) -> f64 {
        self.slopes.iter().cloned().fold(f64::MIN, f64::max)
    }
    fn min_slope(&self) -> f64 {
        self.slopes.iter().cloned().fold(f64::MAX, f64::min)
    }
}

/// All pairs from a symmetric grid on `[-5, 5]` with spacing 0.25.
pub fn default_probe_pairs() -> Vec<(f64, f64)> {
    let pts: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.25).collect();
    pts.iter().flat_map(|&a| pts.iter().map(move |&b| (a, b))).collect()
}
