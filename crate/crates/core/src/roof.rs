//! Piecewise-affine functions on `[0, 1)` and roof functions for special
//! flows: evaluation, Birkhoff sums, variation, sum of jumps, the
//! linear/absolutely-continuous decomposition, and exact integration.

use crate::iet::{IetError, IetSpec};
use crate::interval::Interval;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RoofError {
    #[error("pieces must start at 0 and be strictly increasing inside [0,1)")]
    BadBreakpoints,
    #[error("roof must be strictly positive; infimum is not (piece {0})")]
    NotPositive(usize),
    #[error("point {0} outside [0,1)")]
    OutOfDomain(String),
    #[error("iet error: {0}")]
    Iet(#[from] IetError),
    #[error("the roof requires an IET of total length 1")]
    DomainMismatch,
}

/// One affine piece: on `[start, next_start)` the value is
/// `left_value + slope * (x - start)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: Scalar,
    pub left_value: Scalar,
    pub slope: Scalar,
}

/// A right-continuous piecewise-affine function on `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseAffine {
    pieces: Vec<Piece>,
}

impl PiecewiseAffine {
    pub fn new(pieces: Vec<Piece>) -> Result<Self, RoofError> {
        if pieces.is_empty() || !pieces[0].start.is_zero() {
            return Err(RoofError::BadBreakpoints);
        }
        for w in pieces.windows(2) {
            if w[0].start >= w[1].start {
                return Err(RoofError::BadBreakpoints);
            }
        }
        if pieces.last().unwrap().start >= Scalar::one() {
            return Err(RoofError::BadBreakpoints);
        }
        Ok(PiecewiseAffine { pieces })
    }

    pub fn constant(c: Scalar) -> Self {
        PiecewiseAffine {
            pieces: vec![Piece {
                start: Scalar::zero(),
                left_value: c,
                slope: Scalar::zero(),
            }],
        }
    }

    /// The affine function `slope * x + value_at_zero` as a single piece.
    pub fn affine(value_at_zero: Scalar, slope: Scalar) -> Self {
        PiecewiseAffine {
            pieces: vec![Piece {
                start: Scalar::zero(),
                left_value: value_at_zero,
                slope,
            }],
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Right endpoint of piece `i` (1 for the last piece).
    fn piece_end(&self, i: usize) -> Scalar {
        if i + 1 < self.pieces.len() {
            self.pieces[i + 1].start.clone()
        } else {
            Scalar::one()
        }
    }

    fn piece_index(&self, x: &Scalar) -> usize {
        // pieces are few; scan from the right
        for i in (0..self.pieces.len()).rev() {
            if *x >= self.pieces[i].start {
                return i;
            }
        }
        unreachable!()
    }

    pub fn evaluate(&self, x: &Scalar) -> Result<Scalar, RoofError> {
        if *x < Scalar::zero() || *x >= Scalar::one() {
            return Err(RoofError::OutOfDomain(x.to_string()));
        }
        let i = self.piece_index(x);
        let p = &self.pieces[i];
        Ok(&p.left_value + &p.slope * (x - &p.start))
    }

    /// Left limit at `x ∈ (0, 1]`.
    pub fn left_limit(&self, x: &Scalar) -> Scalar {
        assert!(*x > Scalar::zero() && *x <= Scalar::one());
        let i = (0..self.pieces.len())
            .rev()
            .find(|&i| *x > self.pieces[i].start)
            .expect("x > 0");
        let p = &self.pieces[i];
        &p.left_value + &p.slope * (x - &p.start)
    }

    /// Interior breakpoints with their jumps `f(β) - f(β⁻)`, only where the
    /// jump is nonzero. 0 never appears here.
    pub fn jumps(&self) -> Vec<(Scalar, Scalar)> {
        let mut out = Vec::new();
        for i in 1..self.pieces.len() {
            let beta = self.pieces[i].start.clone();
            let d = &self.pieces[i].left_value - self.left_limit(&beta);
            if !d.is_zero() {
                out.push((beta, d));
            }
        }
        out
    }

    /// The wrap comparison at 0: `f(0) - f(1⁻)`, a derived diagnostic.
    pub fn wrap_jump(&self) -> Scalar {
        &self.pieces[0].left_value - self.left_limit(&Scalar::one())
    }

    /// `S(f) = ∫₀¹ f'(x) dx = Σ slopeᵢ · lenᵢ`, exact.
    pub fn sum_of_jumps(&self) -> Scalar {
        let mut acc = Scalar::zero();
        for i in 0..self.pieces.len() {
            let len = self.piece_end(i) - &self.pieces[i].start;
            acc = acc + &self.pieces[i].slope * len;
        }
        acc
    }

    /// Total variation over `[0, 1)`: slope mass plus interior jump mass.
    pub fn variation(&self) -> Scalar {
        let mut acc = Scalar::zero();
        for i in 0..self.pieces.len() {
            let len = self.piece_end(i) - &self.pieces[i].start;
            acc = acc + self.pieces[i].slope.abs() * len;
        }
        for (_, d) in self.jumps() {
            acc = acc + d.abs();
        }
        acc
    }

    /// Exact infimum over `[0, 1)` (attained or a one-sided limit).
    pub fn infimum(&self) -> Scalar {
        let mut best: Option<Scalar> = None;
        for i in 0..self.pieces.len() {
            let p = &self.pieces[i];
            let at_start = p.left_value.clone();
            let end = self.piece_end(i);
            let at_end = &p.left_value + &p.slope * (&end - &p.start);
            for v in [at_start, at_end] {
                if best.as_ref().map_or(true, |b| v < *b) {
                    best = Some(v);
                }
            }
        }
        best.unwrap()
    }

    pub fn supremum(&self) -> Scalar {
        let mut best: Option<Scalar> = None;
        for i in 0..self.pieces.len() {
            let p = &self.pieces[i];
            let end = self.piece_end(i);
            let at_end = &p.left_value + &p.slope * (&end - &p.start);
            for v in [p.left_value.clone(), at_end] {
                if best.as_ref().map_or(true, |b| v > *b) {
                    best = Some(v);
                }
            }
        }
        best.unwrap()
    }

    /// Exact `∫_iv f`, for `iv ⊆ [0, 1)`.
    pub fn integrate(&self, iv: &Interval) -> Scalar {
        if iv.is_empty() {
            return Scalar::zero();
        }
        assert!(iv.lo >= Scalar::zero() && iv.hi <= Scalar::one());
        let mut acc = Scalar::zero();
        for i in 0..self.pieces.len() {
            let cell = Interval::new(self.pieces[i].start.clone(), self.piece_end(i));
            let cap = cell.intersect(iv);
            if cap.is_empty() {
                continue;
            }
            let p = &self.pieces[i];
            // ∫ (v0 + s(x - s0)) dx over [a, b)
            let a = &cap.lo - &p.start;
            let b = &cap.hi - &p.start;
            let half = Scalar::from_ratio(1, 2);
            acc = acc + &p.left_value * (&b - &a) + &p.slope * half * (&b * &b - &a * &a);
        }
        acc
    }

    /// True iff every breakpoint carrying a nonzero jump coincides with a left
    /// endpoint of an exchanged interval of `iet`.
    pub fn continuity_over_exchanged(&self, iet: &IetSpec) -> bool {
        self.jumps()
            .iter()
            .all(|(beta, _)| iet.left_endpoints().iter().any(|e| e == beta))
    }

    /// All slopes equal? Returns the common slope if so.
    pub fn uniform_slope(&self) -> Option<Scalar> {
        let s = &self.pieces[0].slope;
        if self.pieces.iter().all(|p| &p.slope == s) {
            Some(s.clone())
        } else {
            None
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.pieces.iter().all(|p| p.slope.is_zero())
    }

    /// Splits `f = f_pl + f_ac`: `f_pl` has constant slope `S(f)` on every
    /// piece and carries all the jumps; `f_ac` is continuous piecewise-affine
    /// with `f_ac(0) = 0` and `∫ f_ac' = 0`.
    pub fn decompose(&self) -> (PiecewiseAffine, PiecewiseAffine) {
        let s = self.sum_of_jumps();
        // f_ac(x) = ∫₀ˣ f' - S(f)·x, continuous with slopes slopeᵢ - S(f)
        let mut ac_pieces = Vec::with_capacity(self.pieces.len());
        let mut acc = Scalar::zero(); // f_ac at current start
        for i in 0..self.pieces.len() {
            let p = &self.pieces[i];
            let slope = &p.slope - &s;
            ac_pieces.push(Piece {
                start: p.start.clone(),
                left_value: acc.clone(),
                slope: slope.clone(),
            });
            let len = self.piece_end(i) - &p.start;
            acc = acc + slope * len;
        }
        let f_ac = PiecewiseAffine { pieces: ac_pieces };
        let pl_pieces: Vec<Piece> = self
            .pieces
            .iter()
            .zip(f_ac.pieces.iter())
            .map(|(p, q)| Piece {
                start: p.start.clone(),
                left_value: &p.left_value - &q.left_value,
                slope: s.clone(),
            })
            .collect();
        (PiecewiseAffine { pieces: pl_pieces }, f_ac)
    }
}

/// A strictly positive piecewise-affine roof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseRoof {
    f: PiecewiseAffine,
}

impl PiecewiseRoof {
    pub fn new(f: PiecewiseAffine) -> Result<Self, RoofError> {
        if !f.infimum().is_positive() {
            let bad = f
                .pieces()
                .iter()
                .position(|p| !p.left_value.is_positive())
                .unwrap_or(0);
            return Err(RoofError::NotPositive(bad));
        }
        Ok(PiecewiseRoof { f })
    }

    pub fn constant(c: Scalar) -> Result<Self, RoofError> {
        PiecewiseRoof::new(PiecewiseAffine::constant(c))
    }

    pub fn function(&self) -> &PiecewiseAffine {
        &self.f
    }
}

impl std::ops::Deref for PiecewiseRoof {
    type Target = PiecewiseAffine;
    fn deref(&self) -> &PiecewiseAffine {
        &self.f
    }
}

/// Exact Birkhoff sum `f^{(n)}(x)`: forward orbit sums for `n > 0`, zero at
/// `n = 0`, and `-(f(T⁻¹x) + … + f(Tⁿx))` for `n < 0`.
pub fn birkhoff_sum(
    f: &PiecewiseAffine,
    iet: &IetSpec,
    n: i64,
    x: &Scalar,
) -> Result<Scalar, RoofError> {
    if iet.total() != &Scalar::one() {
        return Err(RoofError::DomainMismatch);
    }
    let mut acc = Scalar::zero();
    let mut y = x.clone();
    if n >= 0 {
        for _ in 0..n {
            acc = acc + f.evaluate(&y)?;
            y = iet.forward(&y)?;
        }
    } else {
        for _ in 0..(-n) {
            y = iet.backward(&y)?;
            acc = acc - f.evaluate(&y)?;
        }
    }
    Ok(acc)
}

/// Tower average `a = (1/|Δ|) ∫_{∪ T^l Δ} f` for a tower given by its base
/// and level translations.
pub fn center_on_tower(f: &PiecewiseAffine, base: &Interval, translations: &[Scalar]) -> Scalar {
    let mut acc = Scalar::zero();
    for t in translations {
        acc = acc + f.integrate(&base.translate(t));
    }
    acc / base.length()
}

/// Parses the roof config: a JSON list of `{start, left_value, slope}` with
/// exact-string scalars.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoofConfig(pub Vec<RoofPieceConfig>);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoofPieceConfig {
    pub start: String,
    pub left_value: String,
    pub slope: String,
}

impl RoofConfig {
    pub fn build(&self) -> Result<PiecewiseRoof, String> {
        let pieces: Vec<Piece> = self
            .0
            .iter()
            .map(|p| -> Result<Piece, String> {
                Ok(Piece {
                    start: p.start.parse::<Scalar>().map_err(|e| e.to_string())?,
                    left_value: p.left_value.parse::<Scalar>().map_err(|e| e.to_string())?,
                    slope: p.slope.parse::<Scalar>().map_err(|e| e.to_string())?,
                })
            })
            .collect::<Result<_, _>>()?;
        let f = PiecewiseAffine::new(pieces).map_err(|e| e.to_string())?;
        PiecewiseRoof::new(f).map_err(|e| e.to_string())
    }
}

/// Builds a piecewise-constant function with value `base` before the first
/// breakpoint and prescribed `(β, jump)` pairs, βs strictly increasing in
/// `(0, 1)`.
pub fn step_function(
    base: Scalar,
    jumps: &[(Scalar, Scalar)],
) -> Result<PiecewiseAffine, RoofError> {
    let mut pieces = vec![Piece {
        start: Scalar::zero(),
        left_value: base,
        slope: Scalar::zero(),
    }];
    for (beta, d) in jumps {
        let prev = pieces.last().unwrap().left_value.clone();
        pieces.push(Piece {
            start: beta.clone(),
            left_value: prev + d,
            slope: Scalar::zero(),
        });
    }
    PiecewiseAffine::new(pieces)
}
