//! Null-function families.
//!
//! A null function is a function of the homodyne outcome (x, phi) whose
//! tomographic average integral dphi/pi integral dx p(x, phi) F(x, phi)
//! vanishes for every physical state. The families used here are monomials
//!
//! ```text
//! F(x, phi) = x^k e^{i (k + 2 + 2 n) phi},   k, n >= 0,
//! ```
//!
//! which average to zero because expanding <x_phi^k> in ladder moments only
//! produces phase factors e^{i q phi} with q even and |q| <= k, while the
//! attached phase makes every exponent even and >= 2; the phase average of
//! such a factor over [0, pi] is zero.
//!
//! Three one-parameter enumerations of this set are used:
//! type I fixes n = 0 (pure x-monomials times matched phases), type II fixes
//! k = 0 (pure phases), type III walks the full (k, n) table diagonally.

use crate::error::{Error, Result};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Hard cap on family size.
pub const MAX_MEMBERS: usize = 64;

/// Exponents of one monomial null function x^k e^{i(k+2+2n) phi}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MonomialIndex {
    pub k: usize,
    pub n: usize,
}

impl MonomialIndex {
    /// Phase exponent q = k + 2 + 2n.
    pub fn phase_exponent(&self) -> usize {
        self.k + 2 + 2 * self.n
    }

    /// Evaluate at one homodyne outcome.
    pub fn eval(&self, x: f64, phi: f64) -> C64 {
        x.powi(self.k as i32) * C64::from_polar(1.0, self.phase_exponent() as f64 * phi)
    }

    /// The product of two members is again a member:
    /// exponents add and the phase bookkeeping gives n = n_a + n_b + 1.
    pub fn closure_product(&self, other: &MonomialIndex) -> MonomialIndex {
        MonomialIndex {
            k: self.k + other.k,
            n: self.n + other.n + 1,
        }
    }
}

/// Which enumeration of the monomial set a family uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    #[serde(rename = "type_i")]
    TypeI,
    #[serde(rename = "type_ii")]
    TypeII,
    #[serde(rename = "type_iii")]
    TypeIII,
}

impl FamilyKind {
    /// Exponents of member j.
    pub fn member(&self, j: usize) -> MonomialIndex {
        match self {
            FamilyKind::TypeI => MonomialIndex { k: j, n: 0 },
            FamilyKind::TypeII => MonomialIndex { k: 0, n: j },
            FamilyKind::TypeIII => {
                // Walk anti-diagonals of the (k, n) table: the d-th diagonal
                // holds the d+1 members with k + n = d, ordered by growing n.
                let mut d = 0usize;
                while (d + 1) * (d + 2) / 2 <= j {
                    d += 1;
                }
                let t = j - d * (d + 1) / 2;
                MonomialIndex { k: d - t, n: t }
            }
        }
    }
}

/// A finite prefix of one family: members 0..m.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NullFamily {
    pub kind: FamilyKind,
    members: Vec<MonomialIndex>,
}

impl NullFamily {
    pub fn new(kind: FamilyKind, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter {
                name: "m",
                why: "a family needs at least one member".into(),
            });
        }
        if m > MAX_MEMBERS {
            return Err(Error::IndexOutOfRange {
                what: "family size",
                got: m,
                cap: MAX_MEMBERS,
            });
        }
        Ok(NullFamily {
            kind,
            members: (0..m).map(|j| kind.member(j)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[MonomialIndex] {
        &self.members
    }

    /// Same enumeration truncated to the first m members.
    pub fn prefix(&self, m: usize) -> NullFamily {
        NullFamily {
            kind: self.kind,
            members: self.members[..m.min(self.members.len())].to_vec(),
        }
    }

    /// Evaluate every member at one outcome into `out`.
    pub fn eval_into(&self, x: f64, phi: f64, out: &mut [C64]) {
        debug_assert_eq!(out.len(), self.members.len());
        // Share the x-powers and phase powers across members.
        let kmax = self.members.iter().map(|m| m.k).max().unwrap_or(0);
        let qmax = self
            .members
            .iter()
            .map(|m| m.phase_exponent())
            .max()
            .unwrap_or(0);
        let mut xp = vec![1.0f64; kmax + 1];
        for k in 1..=kmax {
            xp[k] = xp[k - 1] * x;
        }
        let step = C64::from_polar(1.0, phi);
        let mut phases = vec![C64::new(1.0, 0.0); qmax + 1];
        for q in 1..=qmax {
            phases[q] = phases[q - 1] * step;
        }
        for (slot, m) in out.iter_mut().zip(&self.members) {
            *slot = phases[m.phase_exponent()] * xp[m.k];
        }
    }
}

/// Average over phi in [0, pi] of e^{i q phi} against dphi/pi:
/// 1 at q = 0, 0 for even q != 0, 2i/(pi q) for odd q.
pub fn phase_average_exp(q: i64) -> C64 {
    if q == 0 {
        C64::new(1.0, 0.0)
    } else if q % 2 == 0 {
        C64::new(0.0, 0.0)
    } else {
        C64::new(0.0, 2.0 / (std::f64::consts::PI * q as f64))
    }
}
