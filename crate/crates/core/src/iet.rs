//! Interval exchange transformations with exact scalars.
//!
//! An IET is a pair `(π, λ)`: the interval `[0, |λ|)` is cut into `d` pieces
//! of lengths `λ_1..λ_d` and piece `k` is translated so that the images are
//! arranged in the order prescribed by `π`.

use crate::interval::Interval;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IetError {
    #[error("permutation images must be a bijection of 1..=d (got {0:?})")]
    NotBijection(Vec<usize>),
    #[error("permutation is reducible: {{1..={0}}} is invariant")]
    Reducible(usize),
    #[error("need at least two intervals, got {0}")]
    TooFewIntervals(usize),
    #[error("length {index} is not positive: {value}")]
    NonPositiveLength { index: usize, value: String },
    #[error("lengths mix different quadratic fields")]
    MixedFields,
    #[error("point {0} outside the domain [0, {1})")]
    OutOfDomain(String, String),
    #[error("roof/IET domain mismatch: total length is {0}, expected 1")]
    DomainNotUnit(String),
}

/// A permutation of `{1, …, d}`, stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    images: Vec<usize>, // images[k] = π(k+1) - 1
}

impl Permutation {
    /// From 1-based images, e.g. `[2, 1]` for the exchange of two intervals.
    pub fn from_one_based(images: &[usize]) -> Result<Self, IetError> {
        let d = images.len();
        let mut seen = vec![false; d];
        for &v in images {
            if v < 1 || v > d || seen[v - 1] {
                return Err(IetError::NotBijection(images.to_vec()));
            }
            seen[v - 1] = true;
        }
        Ok(Permutation {
            images: images.iter().map(|&v| v - 1).collect(),
        })
    }

    pub fn from_zero_based(images: Vec<usize>) -> Result<Self, IetError> {
        let one: Vec<usize> = images.iter().map(|&v| v + 1).collect();
        Permutation::from_one_based(&one)
    }

    pub fn identity(d: usize) -> Self {
        Permutation {
            images: (0..d).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.images.len()
    }

    /// 0-based image of 0-based index.
    pub fn image(&self, k: usize) -> usize {
        self.images[k]
    }

    /// 0-based preimage of a 0-based position.
    pub fn preimage(&self, p: usize) -> usize {
        self.images.iter().position(|&v| v == p).unwrap()
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.images.iter().map(|&v| v + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = IetError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Permutation::from_one_based(&v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.one_based()
    }
}

/// True iff no proper prefix `{1..k}`, `k < d`, is invariant under `π`.
pub fn is_irreducible(pi: &Permutation) -> bool {
    let d = pi.d();
    let mut max_image = 0usize;
    for k in 0..d.saturating_sub(1) {
        max_image = max_image.max(pi.image(k));
        if max_image == k {
            return false;
        }
    }
    true
}

/// The interval exchange transformation `T_{π,λ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IetSpec {
    pi: Permutation,
    lambda: Vec<Scalar>,
    /// Left endpoints of the exchanged intervals (length d).
    breaks: Vec<Scalar>,
    /// Left endpoints of the image intervals, indexed by image position.
    image_breaks: Vec<Scalar>,
    /// Translation offsets: `T(x) = x + offsets[k]` for `x ∈ I_k`.
    offsets: Vec<Scalar>,
    total: Scalar,
}

impl IetSpec {
    pub fn new(pi: Permutation, lambda: Vec<Scalar>) -> Result<Self, IetError> {
        let d = lambda.len();
        if d < 2 {
            return Err(IetError::TooFewIntervals(d));
        }
        if pi.d() != d {
            return Err(IetError::NotBijection(pi.one_based()));
        }
        if !is_irreducible(&pi) {
            let k = (0..d - 1)
                .scan(0usize, |m, k| {
                    *m = (*m).max(pi.image(k));
                    Some((k, *m))
                })
                .find(|&(k, m)| m == k)
                .map(|(k, _)| k + 1)
                .unwrap_or(0);
            return Err(IetError::Reducible(k));
        }
        let mut disc: Option<u64> = None;
        for (i, l) in lambda.iter().enumerate() {
            if !l.is_positive() {
                return Err(IetError::NonPositiveLength {
                    index: i,
                    value: l.to_string(),
                });
            }
            if let Some(d2) = l.field_disc() {
                match disc {
                    None => disc = Some(d2),
                    Some(d1) if d1 != d2 => return Err(IetError::MixedFields),
                    _ => {}
                }
            }
        }
        let mut breaks = Vec::with_capacity(d);
        let mut acc = Scalar::zero();
        for l in &lambda {
            breaks.push(acc.clone());
            acc = &acc + l;
        }
        let totals = acc;
        // image breaks: position p holds the interval π⁻¹(p); accumulate its
        // lengths in position order.
        let mut image_breaks = vec![Scalar::zero(); d];
        let mut acc = Scalar::zero();
        for p in 0..d {
            image_breaks[p] = acc.clone();
            let k = pi.preimage(p);
            acc = &acc + &lambda[k];
        }
        let offsets: Vec<Scalar> = (0..d)
            .map(|k| &image_breaks[pi.image(k)] - &breaks[k])
            .collect();
        let spec = IetSpec {
            pi,
            lambda,
            breaks,
            image_breaks,
            offsets,
            total: totals,
        };
        debug_assert!(spec.verify_tiling());
        Ok(spec)
    }

    /// Exact check that the image intervals tile `[0, |λ|)` in π-order.
    pub fn verify_tiling(&self) -> bool {
        let d = self.d();
        let mut edge = Scalar::zero();
        for p in 0..d {
            let k = self.pi.preimage(p);
            let lo = &self.breaks[k] + &self.offsets[k];
            if lo != edge {
                return false;
            }
            edge = &lo + &self.lambda[k];
        }
        edge == self.total
    }

    pub fn d(&self) -> usize {
        self.lambda.len()
    }

    pub fn pi(&self) -> &Permutation {
        &self.pi
    }

    pub fn lengths(&self) -> &[Scalar] {
        &self.lambda
    }

    pub fn total(&self) -> &Scalar {
        &self.total
    }

    /// Left endpoint of `I_k` (0-based `k`).
    pub fn left_endpoint(&self, k: usize) -> &Scalar {
        &self.breaks[k]
    }

    pub fn left_endpoints(&self) -> &[Scalar] {
        &self.breaks
    }

    pub fn offsets(&self) -> &[Scalar] {
        &self.offsets
    }

    /// The exchanged interval `I_k` as an [`Interval`].
    pub fn interval(&self, k: usize) -> Interval {
        let hi = if k + 1 < self.d() {
            self.breaks[k + 1].clone()
        } else {
            self.total.clone()
        };
        Interval::new(self.breaks[k].clone(), hi)
    }

    /// Index of the exchanged interval containing `x`.
    pub fn locate(&self, x: &Scalar) -> Result<usize, IetError> {
        if x < &Scalar::zero() || x >= &self.total {
            return Err(IetError::OutOfDomain(x.to_string(), self.total.to_string()));
        }
        // d is small; linear scan from the right finds the piece.
        for k in (0..self.d()).rev() {
            if x >= &self.breaks[k] {
                return Ok(k);
            }
        }
        unreachable!()
    }

    /// Index of the image interval containing `x` (for the inverse map).
    fn locate_image(&self, x: &Scalar) -> Result<usize, IetError> {
        if x < &Scalar::zero() || x >= &self.total {
            return Err(IetError::OutOfDomain(x.to_string(), self.total.to_string()));
        }
        for p in (0..self.d()).rev() {
            if x >= &self.image_breaks[p] {
                return Ok(self.pi.preimage(p));
            }
        }
        unreachable!()
    }

    pub fn forward(&self, x: &Scalar) -> Result<Scalar, IetError> {
        let k = self.locate(x)?;
        Ok(x + &self.offsets[k])
    }

    pub fn backward(&self, x: &Scalar) -> Result<Scalar, IetError> {
        let k = self.locate_image(x)?;
        Ok(x - &self.offsets[k])
    }

    /// `T^n(x)` exactly; `n` may be negative or zero.
    pub fn apply(&self, x: &Scalar, n: i64) -> Result<Scalar, IetError> {
        let mut y = x.clone();
        if x < &Scalar::zero() || x >= &self.total {
            return Err(IetError::OutOfDomain(x.to_string(), self.total.to_string()));
        }
        if n >= 0 {
            for _ in 0..n {
                y = self.forward(&y)?;
            }
        } else {
            for _ in 0..(-n) {
                y = self.backward(&y)?;
            }
        }
        Ok(y)
    }

    /// The orbit segment `x, T x, …, T^n x` (or backward for `n < 0`).
    pub fn orbit(&self, x: &Scalar, n: i64) -> Result<Vec<Scalar>, IetError> {
        let steps = n.unsigned_abs() as usize;
        let mut out = Vec::with_capacity(steps + 1);
        let mut y = x.clone();
        if x < &Scalar::zero() || x >= &self.total {
            return Err(IetError::OutOfDomain(x.to_string(), self.total.to_string()));
        }
        out.push(y.clone());
        for _ in 0..steps {
            y = if n >= 0 {
                self.forward(&y)?
            } else {
                self.backward(&y)?
            };
            out.push(y.clone());
        }
        Ok(out)
    }

    /// Rescales so that the total length is exactly 1.
    pub fn normalized(&self) -> IetSpec {
        let lens: Vec<Scalar> = self.lambda.iter().map(|l| l / &self.total).collect();
        IetSpec::new(self.pi.clone(), lens).expect("normalization preserves validity")
    }
}

/// Translation offsets ω with `T(x) = x + ω_k` on `I_k`.
pub fn translation_offsets(iet: &IetSpec) -> Vec<Scalar> {
    iet.offsets().to_vec()
}

/// Result of a bounded-depth Keane's-condition search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum KeaneCheck {
    Ok,
    /// `T^k(∂I_i) = ∂I_j` with `(k, j) ≠ (1, 1)`; indices are 1-based.
    Violation { k: u64, i: usize, j: usize },
}

/// Searches orbits of the discontinuity points `∂I_i`, `i = 2..=d`, up to
/// `depth` iterates for a forbidden coincidence with any `∂I_j`. The single
/// permitted coincidence is `k = 1`, `j = 1`.
pub fn keane_check(iet: &IetSpec, depth: u64) -> KeaneCheck {
    let d = iet.d();
    let mut points: Vec<Scalar> = (1..d).map(|i| iet.left_endpoint(i).clone()).collect();
    for k in 1..=depth {
        for (idx, p) in points.iter_mut().enumerate() {
            *p = iet.forward(p).expect("orbit stays in domain");
            for j in 0..d {
                if *p == *iet.left_endpoint(j) && !(k == 1 && j == 0) {
                    return KeaneCheck::Violation {
                        k,
                        i: idx + 2,
                        j: j + 1,
                    };
                }
            }
        }
    }
    KeaneCheck::Ok
}

/// Parses the `{"permutation": [...], "lengths": ["...", ...]}` fragment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IetConfig {
    pub permutation: Vec<usize>,
    pub lengths: Vec<String>,
}

impl IetConfig {
    pub fn build(&self) -> Result<IetSpec, String> {
        let pi = Permutation::from_one_based(&self.permutation).map_err(|e| e.to_string())?;
        let lambda: Vec<Scalar> = self
            .lengths
            .iter()
            .map(|s| s.parse::<Scalar>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        IetSpec::new(pi, lambda).map_err(|e| e.to_string())
    }
}

/// The golden-mean lengths `((3-√5)/2, (√5-1)/2)`: the canonical exact
/// quadratic 2-IET used throughout the tests.
pub fn golden_lengths() -> Vec<Scalar> {
    vec![
        Scalar::quad_parts(3, 2, -1, 2, 5),
        Scalar::quad_parts(-1, 2, 1, 2, 5),
    ]
}

pub fn exchange_two() -> Permutation {
    Permutation::from_one_based(&[2, 1]).unwrap()
}

pub fn golden_iet() -> IetSpec {
    IetSpec::new(exchange_two(), golden_lengths()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot_third() -> IetSpec {
        IetSpec::new(
            exchange_two(),
            vec![Scalar::from_ratio(1, 3), Scalar::from_ratio(2, 3)],
        )
        .unwrap()
    }

    #[test]
    fn irreducibility() {
        assert!(!is_irreducible(&Permutation::identity(2)));
        assert!(is_irreducible(&exchange_two()));
        assert!(is_irreducible(
            &Permutation::from_one_based(&[3, 1, 2]).unwrap()
        ));
        assert!(!is_irreducible(
            &Permutation::from_one_based(&[2, 1, 3]).unwrap()
        ));
    }

    #[test]
    fn offsets_two_interval() {
        let iet = rot_third();
        assert_eq!(
            translation_offsets(&iet),
            vec![Scalar::from_ratio(2, 3), Scalar::from_ratio(-1, 3)]
        );
        assert!(iet.verify_tiling());
    }

    #[test]
    fn offsets_symmetric_family() {
        // any 0 < x < 1: ω = (1-x, -x)
        for num in 1..8 {
            let x = Scalar::from_ratio(num, 8);
            let iet = IetSpec::new(
                exchange_two(),
                vec![x.clone(), &Scalar::one() - &x],
            )
            .unwrap();
            assert_eq!(
                translation_offsets(&iet),
                vec![&Scalar::one() - &x, -x.clone()]
            );
        }
    }

    #[test]
    fn apply_examples() {
        let iet = rot_third();
        assert_eq!(
            iet.apply(&Scalar::zero(), 1).unwrap(),
            Scalar::from_ratio(2, 3)
        );
        assert_eq!(iet.apply(&Scalar::from_ratio(1, 7), 0).unwrap(), Scalar::from_ratio(1, 7));
        assert_eq!(
            iet.apply(&Scalar::from_ratio(2, 3), -1).unwrap(),
            Scalar::zero()
        );
        assert!(iet.apply(&Scalar::one(), 1).is_err());
        assert!(iet.apply(&Scalar::from_integer(-1), 1).is_err());
    }

    #[test]
    fn orbit_of_zero() {
        let iet = rot_third();
        let orb = iet.orbit(&Scalar::zero(), 3).unwrap();
        assert_eq!(
            orb,
            vec![
                Scalar::zero(),
                Scalar::from_ratio(2, 3),
                Scalar::from_ratio(1, 3),
                Scalar::zero()
            ]
        );
    }

    #[test]
    fn bijectivity_round_trip() {
        let iet = golden_iet();
        for num in 0..16 {
            let x = Scalar::from_ratio(num, 16);
            for n in [-9i64, -3, -1, 0, 1, 2, 5, 12] {
                let y = iet.apply(&x, n).unwrap();
                assert_eq!(iet.apply(&y, -n).unwrap(), x);
            }
        }
    }

    #[test]
    fn measure_preservation_on_continuity_pieces() {
        let iet = rot_third();
        // [a,b) inside I_2: image length equals b-a exactly
        let a = Scalar::from_ratio(1, 2);
        let b = Scalar::from_ratio(3, 5);
        let fa = iet.forward(&a).unwrap();
        let fb = iet.forward(&b).unwrap();
        assert_eq!(&fb - &fa, &b - &a);
    }

    #[test]
    fn keane_violation_for_rational_rotation() {
        // orbit of ∂I_2 = 1/3: T(1/3)=0 (allowed), T²(1/3)=2/3, T³(1/3)=1/3
        let out = keane_check(&rot_third(), 5);
        assert_eq!(out, KeaneCheck::Violation { k: 3, i: 2, j: 2 });
    }

    #[test]
    fn keane_ok_for_golden() {
        assert_eq!(keane_check(&golden_iet(), 50), KeaneCheck::Ok);
    }

    #[test]
    fn keane_allows_the_single_coincidence() {
        // For d=2 exchanges, T(∂I_2) = 0 = ∂I_1 always: k=1, j=1 permitted.
        let iet = IetSpec::new(
            exchange_two(),
            vec![Scalar::quad_parts(1, 2, -1, 8, 2), Scalar::quad_parts(1, 2, 1, 8, 2)],
        )
        .unwrap();
        assert_eq!(keane_check(&iet, 30), KeaneCheck::Ok);
    }

    #[test]
    fn field_closure_under_apply() {
        let iet = golden_iet();
        let x = Scalar::from_ratio(1, 7);
        let y = iet.apply(&x, 5).unwrap();
        assert_eq!(y.field_disc(), Some(5));
    }

    #[test]
    fn construction_rejections() {
        assert!(IetSpec::new(Permutation::identity(2), golden_lengths()).is_err());
        assert!(IetSpec::new(
            exchange_two(),
            vec![Scalar::zero(), Scalar::one()]
        )
        .is_err());
        assert!(IetSpec::new(
            exchange_two(),
            vec![
                Scalar::quad_parts(1, 1, 1, 1, 2),
                Scalar::quad_parts(1, 1, 1, 1, 3)
            ]
        )
        .is_err());
        assert!(IetSpec::new(exchange_two(), vec![Scalar::one()]).is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = IetConfig {
            permutation: vec![2, 1],
            lengths: vec!["3/2-1/2*sqrt(5)".into(), "-1/2+1/2*sqrt(5)".into()],
        };
        let iet = cfg.build().unwrap();
        assert_eq!(iet, golden_iet());
        let bad = IetConfig {
            permutation: vec![1, 2],
            lengths: vec!["1/2".into(), "1/2".into()],
        };
        assert!(bad.build().is_err());
    }
}
