//! Robust ψ-functions shared by the local smoothers, the GM regression step
//! and the cross-validation criterion.

use serde::Serialize;

use crate::error::{PlmError, Result};
use crate::scalar::Scalar;

/// Default Huber tuning constant (95% efficiency at the normal).
pub const HUBER_DEFAULT: f64 = 1.345;
/// Default bisquare tuning constant (95% efficiency at the normal).
pub const BISQUARE_DEFAULT: f64 = 4.685;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", content = "c", rename_all = "snake_case")]
pub enum ScoreFunction<T> {
    /// ψ(u) = u; turns every robust step into its least-squares counterpart.
    Identity,
    /// ψ(u) = max(-c, min(c, u)).
    Huber(T),
    /// ψ(u) = u (1 - (u/c)²)² on |u| ≤ c, zero outside. Redescending.
    Bisquare(T),
}

impl<T: Scalar> Default for ScoreFunction<T> {
    fn default() -> Self {
        ScoreFunction::Huber(T::cst(HUBER_DEFAULT))
    }
}

impl<T: Scalar> ScoreFunction<T> {
    pub fn huber() -> Self {
        ScoreFunction::Huber(T::cst(HUBER_DEFAULT))
    }

    pub fn bisquare() -> Self {
        ScoreFunction::Bisquare(T::cst(BISQUARE_DEFAULT))
    }

    /// Reject non-positive or non-finite tuning constants.
    pub fn validate(&self) -> Result<()> {
        match self {
            ScoreFunction::Identity => Ok(()),
            ScoreFunction::Huber(c) | ScoreFunction::Bisquare(c) => {
                if *c > T::zero() && c.is_finite() {
                    Ok(())
                } else {
                    Err(PlmError::Config(format!("tuning constant must be positive and finite, got {c}")))
                }
            }
        }
    }

    #[inline]
    pub fn psi(&self, u: T) -> T {
        match *self {
            ScoreFunction::Identity => u,
            ScoreFunction::Huber(c) => u.max(-c).min(c),
            ScoreFunction::Bisquare(c) => {
                if u.abs() <= c {
                    let z = u / c;
                    let a = T::one() - z * z;
                    u * a * a
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Derivative of ψ. At the Huber corners |u| = c the outer branch (0) is used.
    #[inline]
    pub fn psi_prime(&self, u: T) -> T {
        match *self {
            ScoreFunction::Identity => T::one(),
            ScoreFunction::Huber(c) => {
                if u.abs() < c {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ScoreFunction::Bisquare(c) => {
                if u.abs() <= c {
                    let z2 = (u / c) * (u / c);
                    (T::one() - z2) * (T::one() - T::cst(5.0) * z2)
                } else {
                    T::zero()
                }
            }
        }
    }

    /// IRLS weight ψ(u)/u, with the limit ψ'(0) at the origin.
    #[inline]
    pub fn irls_weight(&self, u: T) -> T {
        if u == T::zero() {
            self.psi_prime(T::zero())
        } else {
            self.psi(u) / u
        }
    }

    /// `sup |ψ|`, infinite for the identity.
    pub fn sup_abs(&self) -> T {
        match *self {
            ScoreFunction::Identity => T::infinity(),
            ScoreFunction::Huber(c) => c,
            // maximum at u = c/√5
            ScoreFunction::Bisquare(c) => {
                let z2 = T::cst(0.2);
                let a = T::one() - z2;
                c * z2.sqrt() * a * a
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ScoreFunction::Identity)
    }

    /// Monotone scores admit a bracketed root solve; redescending ones do not.
    pub fn is_monotone(&self) -> bool {
        !matches!(self, ScoreFunction::Bisquare(_))
    }

    pub fn is_bounded(&self) -> bool {
        !self.is_identity()
    }

    /// Locations where ψ is not differentiable.
    pub fn kinks(&self) -> Vec<T> {
        match *self {
            ScoreFunction::Identity => vec![],
            ScoreFunction::Huber(c) | ScoreFunction::Bisquare(c) => vec![-c, c],
        }
    }

    /// Numerically probe the regularity conditions the asymptotic theory uses.
    pub fn check_assumptions(&self) -> ScoreDiagnostics {
        let grid: Vec<T> = (-400..=400).map(|k| T::cst(k as f64 * 0.025)).collect();
        let odd = grid.iter().all(|&u| (self.psi(-u) + self.psi(u)).abs() <= T::cst(1e-12));
        let nondecreasing = grid.windows(2).all(|w| self.psi(w[1]) >= self.psi(w[0]));
        let strictly_increasing = grid.windows(2).all(|w| self.psi(w[1]) > self.psi(w[0]));
        let h = T::cst(1e-5);
        let kinks = self.kinks();
        let derivative_consistent =
            grid.iter().filter(|&&u| kinks.iter().all(|k| (u - *k).abs() > T::cst(1e-3))).all(|&u| {
                let fd = (self.psi(u + h) - self.psi(u - h)) / (h + h);
                (fd - self.psi_prime(u)).abs() < T::cst(1e-6)
            });
        ScoreDiagnostics {
            odd,
            nondecreasing,
            strictly_increasing,
            bounded: self.is_bounded(),
            derivative_consistent,
        }
    }
}

/// Result of [`ScoreFunction::check_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScoreDiagnostics {
    pub odd: bool,
    pub nondecreasing: bool,
    pub strictly_increasing: bool,
    pub bounded: bool,
    pub derivative_consistent: bool,
}
