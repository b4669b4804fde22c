//! The special flow under a roof function as an executable system, exact
//! rectangle measures, and deterministic Monte Carlo estimation of triple
//! correlations used to witness the limit self-joining empirically.

use crate::criterion::CriterionError;
use crate::iet::IetSpec;
use crate::interval::Interval;
use crate::roof::{birkhoff_sum, PiecewiseAffine, PiecewiseRoof, RoofError};
use crate::scalar::Scalar;
use crate::towers::RigidityTower;
use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JoiningError {
    #[error("roof error: {0}")]
    Roof(#[from] RoofError),
    #[error("iet error: {0}")]
    Iet(#[from] crate::iet::IetError),
    #[error("point ({0}, {1}) is not under the roof")]
    NotUnderRoof(String, String),
    #[error("band must satisfy 0 <= lo < hi, got [{0}, {1})")]
    BadBand(String, String),
    #[error("exact rectangle flow requires a piecewise-constant roof")]
    NotPiecewiseConstant,
    #[error("criterion error: {0}")]
    Criterion(String),
}

impl From<CriterionError> for JoiningError {
    fn from(e: CriterionError) -> Self {
        JoiningError::Criterion(e.to_string())
    }
}

/// A point of the flow space: `0 <= r < f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowPoint {
    pub x: Scalar,
    pub r: Scalar,
}

/// An axis-aligned test set `base × band`, implicitly intersected with the
/// region under the roof.
#[derive(Debug, Clone, Serialize)]
pub struct FlowRect {
    pub base: Interval,
    pub band: Interval,
}

impl FlowRect {
    pub fn contains(&self, p: &FlowPoint) -> bool {
        self.base.contains(&p.x) && self.band.contains(&p.r)
    }
}

/// Moves a point of the flow space vertically by `t`, resolving roof
/// crossings exactly; total for any exact `t`.
pub fn flow(
    f: &PiecewiseRoof,
    iet: &IetSpec,
    p: &FlowPoint,
    t: &Scalar,
) -> Result<FlowPoint, JoiningError> {
    let fx = f.evaluate(&p.x)?;
    if p.r < Scalar::zero() || p.r >= fx {
        return Err(JoiningError::NotUnderRoof(p.x.to_string(), p.r.to_string()));
    }
    let mut x = p.x.clone();
    let mut r = &p.r + t;
    loop {
        if r < Scalar::zero() {
            x = iet.backward(&x)?;
            r = r + f.evaluate(&x)?;
        } else {
            let fx = f.evaluate(&x)?;
            if r < fx {
                break;
            }
            r = r - fx;
            x = iet.forward(&x)?;
        }
    }
    Ok(FlowPoint { x, r })
}

/// Exact measure of `rect ∩ X^f` by piecewise integration of the clamped
/// fiber length.
pub fn exact_rect_measure(f: &PiecewiseRoof, rect: &FlowRect) -> Result<Scalar, JoiningError> {
    let (r1, r2) = (&rect.band.lo, &rect.band.hi);
    if *r1 < Scalar::zero() || r1 >= r2 {
        return Err(JoiningError::BadBand(r1.to_string(), r2.to_string()));
    }
    if rect.base.is_empty() {
        return Ok(Scalar::zero());
    }
    // split the base so f is affine per cell, then at the crossings f = r1,
    // f = r2, and integrate the fiber length max(0, min(f, r2) - r1)
    let mut cuts: Vec<Scalar> = vec![rect.base.lo.clone(), rect.base.hi.clone()];
    for piece in f.pieces() {
        if piece.start > rect.base.lo && piece.start < rect.base.hi {
            cuts.push(piece.start.clone());
        }
        if !piece.slope.is_zero() {
            for level in [r1, r2] {
                // x with left_value + slope (x - start) = level
                let x = &piece.start + (level - &piece.left_value) / &piece.slope;
                if x > rect.base.lo && x < rect.base.hi {
                    cuts.push(x);
                }
            }
        }
    }
    cuts.sort();
    cuts.dedup();
    let mut acc = Scalar::zero();
    let half = Scalar::from_ratio(1, 2);
    for cell in cuts.windows(2) {
        let mid = (&cell[0] + &cell[1]) * &half;
        let fmid = f.evaluate(&mid)?;
        if fmid <= *r1 {
            continue;
        }
        let width = &cell[1] - &cell[0];
        if fmid >= *r2 {
            acc = acc + (r2 - r1) * width;
        } else {
            // f is affine and strictly inside the band on this cell, so the
            // midpoint rule integrates (f - r1) exactly
            acc = acc + (&fmid - r1) * width;
        }
    }
    Ok(acc)
}

/// Total measure of the flow space, `∫₀¹ f`.
pub fn flow_space_measure(f: &PiecewiseRoof) -> Scalar {
    f.integrate(&Interval::new(Scalar::zero(), Scalar::one()))
}

// --- deterministic counter-based sampling -----------------------------------

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent draw keyed by `(seed, index, lane)`: parallel workers
/// reproduce identical streams.
pub fn sample_u64(seed: u64, index: u64, lane: u64) -> u64 {
    splitmix(
        seed ^ index.wrapping_mul(0xA24B_AED4_963E_E407)
            ^ lane.wrapping_mul(0x9E6D_62D0_6F6A_9A9B),
    )
}

/// Exact dyadic fraction in `[0, 1)` with 53 random bits.
pub fn sample_unit(seed: u64, index: u64, lane: u64) -> Scalar {
    sample_unit_bits(seed, index, lane, 53)
}

/// Exact dyadic fraction in `[0, 1)` with a chosen bit width; coarse widths
/// keep downstream exact arithmetic cheap.
pub fn sample_unit_bits(seed: u64, index: u64, lane: u64, bits: u32) -> Scalar {
    assert!(bits >= 1 && bits <= 53);
    let v = sample_u64(seed, index, lane) >> (64 - bits);
    Scalar::from_rational(BigRational::new(
        BigInt::from(v),
        BigInt::from(1u64 << bits),
    ))
}

/// A Monte Carlo estimate with its 1σ standard error.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub value: Scalar,
    pub stderr: f64,
    pub hits: u64,
    pub samples: u64,
}

fn binomial_estimate(hits: u64, samples: u64, volume: &Scalar) -> Estimate {
    let value = volume
        * Scalar::from_rational(BigRational::new(BigInt::from(hits), BigInt::from(samples)));
    let p = hits as f64 / samples as f64;
    let stderr = volume.to_f64() * (p * (1.0 - p) / samples as f64).sqrt();
    Estimate {
        value,
        stderr,
        hits,
        samples,
    }
}

/// Monte Carlo estimate of `μ^f(T^f_t A ∩ T^f_u B ∩ C)` by exact rejection
/// sampling of the region under the roof; deterministic for a fixed seed and
/// data-parallel over sample blocks.
#[allow(clippy::too_many_arguments)]
pub fn triple_correlation(
    f: &PiecewiseRoof,
    iet: &IetSpec,
    a: &FlowRect,
    b: &FlowRect,
    c: &FlowRect,
    t: &Scalar,
    u: &Scalar,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate, JoiningError> {
    let sup = f.supremum();
    let neg_t = -t.clone();
    let neg_u = -u.clone();
    let hits: u64 = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let x = sample_unit(seed, i, 0);
            let h = sample_unit(seed, i, 1) * &sup;
            let fx = f.evaluate(&x).expect("sample in domain");
            if h >= fx {
                return 0u64;
            }
            let p = FlowPoint { x, r: h };
            if !c.contains(&p) {
                return 0;
            }
            let pa = flow(f, iet, &p, &neg_t).expect("flow total");
            if !a.contains(&pa) {
                return 0;
            }
            let pb = flow(f, iet, &p, &neg_u).expect("flow total");
            if b.contains(&pb) {
                1
            } else {
                0
            }
        })
        .sum();
    Ok(binomial_estimate(hits, n_samples, &sup))
}

// --- exact rectangle flow for piecewise-constant roofs ------------------------

/// Disjoint axis-aligned parts of a subset of `X × ℝ`.
pub type RectUnion = Vec<FlowRect>;

fn split_base_cells(f: &PiecewiseAffine, iet: &IetSpec, base: &Interval) -> Vec<Interval> {
    let mut cuts = vec![base.lo.clone(), base.hi.clone()];
    for p in f.pieces().iter().skip(1) {
        if p.start > base.lo && p.start < base.hi {
            cuts.push(p.start.clone());
        }
    }
    for k in 1..iet.d() {
        let e = iet.left_endpoint(k);
        if *e > base.lo && *e < base.hi {
            cuts.push(e.clone());
        }
    }
    cuts.sort();
    cuts.dedup();
    cuts.windows(2)
        .map(|w| Interval::new(w[0].clone(), w[1].clone()))
        .collect()
}

/// Exact image of a rectangle union under the flow `T^f_t`, for a
/// piecewise-constant roof. Parts are clipped to the region under the roof;
/// the output is again a disjoint union of rectangles under the roof.
pub fn flow_rect_union(
    f: &PiecewiseRoof,
    iet: &IetSpec,
    parts: &[FlowRect],
    t: &Scalar,
) -> Result<RectUnion, JoiningError> {
    if !f.is_piecewise_constant() {
        return Err(JoiningError::NotPiecewiseConstant);
    }
    let mut queue: Vec<FlowRect> = Vec::new();
    for part in parts {
        for cell in split_base_cells(f.function(), iet, &part.base) {
            let fc = f.evaluate(&cell.lo)?;
            let band = part.band.intersect(&Interval::new(Scalar::zero(), fc));
            if !band.is_empty() {
                queue.push(FlowRect {
                    base: cell,
                    band: band.translate(t),
                });
            }
        }
    }
    let mut done: RectUnion = Vec::new();
    while let Some(rect) = queue.pop() {
        // invariant: rect.base lies in one roof piece and one exchange piece
        let fc = f.evaluate(&rect.base.lo)?;
        if rect.band.lo >= Scalar::zero() && rect.band.hi <= fc {
            if !rect.band.is_empty() {
                done.push(rect);
            }
            continue;
        }
        if rect.band.lo < Scalar::zero() {
            let below = Interval::new(
                rect.band.lo.clone(),
                if rect.band.hi < Scalar::zero() {
                    rect.band.hi.clone()
                } else {
                    Scalar::zero()
                },
            );
            let above = Interval::new(Scalar::zero(), rect.band.hi.clone());
            if !above.is_empty() {
                queue.push(FlowRect {
                    base: rect.base.clone(),
                    band: above,
                });
            }
            // the sub-zero slab descends: T⁻¹ of the base splits along images
            for k in 0..iet.d() {
                let image = iet.interval(k).translate(&iet.offsets()[k]);
                let cap = image.intersect(&rect.base);
                if cap.is_empty() {
                    continue;
                }
                let back = cap.translate(&-iet.offsets()[k].clone());
                for cell in split_base_cells(f.function(), iet, &back) {
                    let fprev = f.evaluate(&cell.lo)?;
                    queue.push(FlowRect {
                        base: cell,
                        band: below.translate(&fprev),
                    });
                }
            }
        } else {
            // split at the roof: the upper slab ascends over T
            let below = rect
                .band
                .intersect(&Interval::new(Scalar::zero(), fc.clone()));
            if !below.is_empty() {
                done.push(FlowRect {
                    base: rect.base.clone(),
                    band: below,
                });
            }
            let above = Interval::new(
                if rect.band.lo > fc {
                    rect.band.lo.clone()
                } else {
                    fc.clone()
                },
                rect.band.hi.clone(),
            );
            if above.is_empty() {
                continue;
            }
            let fwd = rect
                .base
                .translate(&iet.offsets()[iet.locate(&rect.base.lo)?]);
            for cell in split_base_cells(f.function(), iet, &fwd) {
                queue.push(FlowRect {
                    base: cell,
                    band: above.translate(&-fc.clone()),
                });
            }
        }
    }
    Ok(done)
}

/// Exact measure of the intersection of unions of pairwise-disjoint
/// rectangles.
pub fn rect_union_intersection_measure(unions: &[&RectUnion]) -> Scalar {
    fn rec(acc: &FlowRect, rest: &[&RectUnion], total: &mut Scalar) {
        match rest.split_first() {
            None => {
                *total = &*total + acc.base.length() * acc.band.length();
            }
            Some((first, tail)) => {
                for r in first.iter() {
                    let base = acc.base.intersect(&r.base);
                    if base.is_empty() {
                        continue;
                    }
                    let band = acc.band.intersect(&r.band);
                    if band.is_empty() {
                        continue;
                    }
                    rec(&FlowRect { base, band }, tail, total);
                }
            }
        }
    }
    let mut total = Scalar::zero();
    if let Some((first, tail)) = unions.split_first() {
        for r in first.iter() {
            rec(r, tail, &mut total);
        }
    }
    total
}

/// Exact `μ^f(T^f_t A ∩ T^f_u B ∩ C)` for a piecewise-constant roof.
pub fn exact_triple_correlation(
    f: &PiecewiseRoof,
    iet: &IetSpec,
    a: &FlowRect,
    b: &FlowRect,
    c: &FlowRect,
    t: &Scalar,
    u: &Scalar,
) -> Result<Scalar, JoiningError> {
    let fa = flow_rect_union(f, iet, std::slice::from_ref(a), t)?;
    let fb = flow_rect_union(f, iet, std::slice::from_ref(b), u)?;
    let fc = flow_rect_union(f, iet, std::slice::from_ref(c), &Scalar::zero())?;
    Ok(rect_union_intersection_measure(&[&fa, &fb, &fc]))
}

/// Image of a rectangle under the skew product power and a vertical shift,
/// `(T_{-f})^k σ_s`, as a rectangle union on `X × ℝ` (no roof clipping).
fn skew_shift(
    f: &PiecewiseRoof,
    iet: &IetSpec,
    rect: &FlowRect,
    k: i64,
    s: &Scalar,
) -> Result<RectUnion, JoiningError> {
    let mut parts: Vec<FlowRect> = vec![FlowRect {
        base: rect.base.clone(),
        band: rect.band.translate(s),
    }];
    for _ in 0..k.unsigned_abs() {
        let mut next = Vec::with_capacity(parts.len());
        for p in &parts {
            if k > 0 {
                // (x, r) ↦ (Tx, r - f(x))
                for cell in split_base_cells(f.function(), iet, &p.base) {
                    let fc = f.evaluate(&cell.lo)?;
                    let moved = cell.translate(&iet.offsets()[iet.locate(&cell.lo)?]);
                    next.push(FlowRect {
                        base: moved,
                        band: p.band.translate(&-fc),
                    });
                }
            } else {
                // inverse: (x, r) ↦ (T⁻¹x, r + f(T⁻¹x))
                for j in 0..iet.d() {
                    let image = iet.interval(j).translate(&iet.offsets()[j]);
                    let cap = image.intersect(&p.base);
                    if cap.is_empty() {
                        continue;
                    }
                    let back = cap.translate(&-iet.offsets()[j].clone());
                    for sub in split_base_cells(f.function(), iet, &back) {
                        let fprev = f.evaluate(&sub.lo)?;
                        next.push(FlowRect {
                            base: sub,
                            band: p.band.translate(&fprev),
                        });
                    }
                }
            }
        }
        parts = next;
    }
    Ok(parts)
}

/// Sums the exact skew-product series terms
/// `μ⊗Leb((T_{-f})^{-k} σ_t A ∩ (T_{-f})^{-l} σ_u B ∩ C)` over the finite
/// window of indices that can contribute; piecewise-constant roofs only.
pub fn triple_correlation_series(
    f: &PiecewiseRoof,
    iet: &IetSpec,
    a: &FlowRect,
    b: &FlowRect,
    c: &FlowRect,
    t: &Scalar,
    u: &Scalar,
) -> Result<Scalar, JoiningError> {
    if !f.is_piecewise_constant() {
        return Err(JoiningError::NotPiecewiseConstant);
    }
    let min_f = f.infimum().to_f64();
    let max_f = f.supremum().to_f64();
    let range = |shift: &Scalar, band: &Interval| -> (i64, i64) {
        let lo = band.lo.to_f64() + shift.to_f64();
        let hi = band.hi.to_f64() + shift.to_f64();
        // the k-th image band sits near `band + shift - k·f`, so only a
        // bounded window of k can reach the roof strip
        let kmax = ((hi.abs() + max_f) / min_f).ceil() as i64 + 2;
        let kmin = -(((lo.abs()) + max_f) / min_f).ceil() as i64 - 2;
        (kmin, kmax)
    };
    let fc = flow_rect_union(f, iet, std::slice::from_ref(c), &Scalar::zero())?;
    let (ka, kb) = range(t, &a.band);
    let (la, lb) = range(u, &b.band);
    let mut total = Scalar::zero();
    for k in ka..=kb {
        let sa = skew_shift(f, iet, a, -k, t)?;
        if sa
            .iter()
            .all(|r| r.band.hi <= Scalar::zero() || r.band.lo >= f.supremum())
        {
            continue;
        }
        for l in la..=lb {
            let sb = skew_shift(f, iet, b, -l, u)?;
            total = total + rect_union_intersection_measure(&[&sa, &sb, &fc]);
        }
    }
    Ok(total)
}

// --- joining convergence table -------------------------------------------------

/// A test triple of rectangles.
#[derive(Debug, Clone, Serialize)]
pub struct RectTriple {
    pub id: String,
    pub a: FlowRect,
    pub b: FlowRect,
    pub c: FlowRect,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancyRow {
    pub depth: usize,
    pub rect_id: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub discrepancy: f64,
    pub combined_sigma: f64,
    /// Empty on the first depth; then "pass" when the discrepancy decreased
    /// by more than three combined sigmas, "fail" otherwise.
    pub flag: String,
}

/// Compares, per tower depth and rectangle triple, the restricted
/// correlation at times `(2a_n, a_n)` with the integral of plain
/// correlations against the exact pair cocycle drawn on the tower. One
/// sample stream per depth is shared by all rectangle triples.
#[allow(clippy::too_many_arguments)]
pub fn joining_convergence_check(
    f: &PiecewiseRoof,
    iet: &IetSpec,
    towers: &[RigidityTower],
    a_n: &[Scalar],
    rects: &[RectTriple],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<DiscrepancyRow>, JoiningError> {
    assert_eq!(towers.len(), a_n.len());
    let sup = f.supremum();
    let nr = rects.len();
    let mut rows: Vec<DiscrepancyRow> = Vec::new();
    for (depth_idx, (tower, a_center)) in towers.iter().zip(a_n.iter()).enumerate() {
        let q = tower.q as i64;
        let w_set = tower.w_set();
        let tq_w = w_set.translate(&tower.displacement);
        let t2q_w = w_set.translate(&(Scalar::from_integer(2) * &tower.displacement));
        let two_a = Scalar::from_integer(2) * a_center;
        // pair cocycle at a point of W: exact fast path for one-piece roofs
        let prefix: Vec<Scalar> = {
            let mut acc = Scalar::zero();
            let mut v = Vec::with_capacity(3 * tower.q + 1);
            v.push(acc.clone());
            for k in 0..3 * tower.q {
                acc = acc + tower.tau(k);
                v.push(acc.clone());
            }
            v
        };
        let single_piece = f.pieces().len() == 1;
        let pair_at = |level: usize, u: &Scalar| -> (Scalar, Scalar) {
            if single_piece {
                let piece = &f.pieces()[0];
                let fu = &piece.left_value + &piece.slope * u;
                let win_q = &prefix[level + tower.q] - &prefix[level];
                let win_2q = &prefix[level + 2 * tower.q] - &prefix[level];
                let fq = Scalar::from_integer(q) * &fu + &piece.slope * win_q;
                let f2q = Scalar::from_integer(2 * q) * &fu + &piece.slope * win_2q;
                (&f2q - &two_a, fq - a_center)
            } else {
                let y = u + &tower.translations[level];
                let fq = birkhoff_sum(f.function(), iet, q, &y).expect("in domain");
                let f2q = birkhoff_sum(f.function(), iet, 2 * q, &y).expect("in domain");
                (f2q - &two_a, fq - a_center)
            }
        };
        // one parallel pass: per-rect hit counters for both sides
        let chunk = 1024u64;
        let blocks = n_samples.div_ceil(chunk);
        let (lhs_hits, rhs_hits) = (0..blocks)
            .into_par_iter()
            .map(|blk| {
                let mut lhs = vec![0u64; nr];
                let mut rhs = vec![0u64; nr];
                let lo = blk * chunk;
                let hi = (lo + chunk).min(n_samples);
                for i in lo..hi {
                    // LHS: restricted correlation at (2a, a)
                    let x = sample_unit(seed, i, 0);
                    let h = sample_unit(seed, i, 1) * &sup;
                    let fx = f.evaluate(&x).expect("in domain");
                    if h < fx {
                        let p = FlowPoint { x, r: h };
                        let pa = flow(f, iet, &p, &two_a).expect("total");
                        let pb = flow(f, iet, &p, a_center).expect("total");
                        let pa_in_w = t2q_w.contains(&pa.x);
                        let pb_in_w = tq_w.contains(&pb.x);
                        for (ri, rt) in rects.iter().enumerate() {
                            if rt.c.contains(&p)
                                && pa_in_w
                                && rt.a.contains(&pa)
                                && pb_in_w
                                && rt.b.contains(&pb)
                            {
                                lhs[ri] += 1;
                            }
                        }
                    }
                    // RHS: plain correlation at the sampled pair cocycle
                    let level = (sample_u64(seed, i, 2) % tower.q as u64) as usize;
                    let frac = sample_unit_bits(seed, i, 3, 24);
                    let u_off = tower.j.length() * frac;
                    let u_abs = &tower.j.lo + &u_off;
                    let (t_i, u_i) = pair_at(level, &u_abs);
                    let x = sample_unit(seed, i, 4);
                    let h = sample_unit(seed, i, 5) * &sup;
                    let fx = f.evaluate(&x).expect("in domain");
                    if h < fx {
                        let p = FlowPoint { x, r: h };
                        let pa = flow(f, iet, &p, &-t_i).expect("total");
                        let pb = flow(f, iet, &p, &-u_i).expect("total");
                        for (ri, rt) in rects.iter().enumerate() {
                            if rt.c.contains(&p) && rt.a.contains(&pa) && rt.b.contains(&pb) {
                                rhs[ri] += 1;
                            }
                        }
                    }
                }
                (lhs, rhs)
            })
            .reduce(
                || (vec![0u64; nr], vec![0u64; nr]),
                |(mut la, mut ra), (lb, rb)| {
                    for (a, b) in la.iter_mut().zip(lb) {
                        *a += b;
                    }
                    for (a, b) in ra.iter_mut().zip(rb) {
                        *a += b;
                    }
                    (la, ra)
                },
            );
        let alpha = tower.measure.clone();
        for (ri, rt) in rects.iter().enumerate() {
            let lhs = binomial_estimate(lhs_hits[ri], n_samples, &sup);
            let mut rhs = binomial_estimate(rhs_hits[ri], n_samples, &sup);
            rhs.value = &rhs.value * &alpha;
            rhs.stderr *= alpha.to_f64();
            let discrepancy = (lhs.value.to_f64() - rhs.value.to_f64()).abs();
            let combined_sigma = (lhs.stderr.powi(2) + rhs.stderr.powi(2)).sqrt();
            let flag = if depth_idx == 0 {
                String::new()
            } else {
                let prev = rows
                    .iter()
                    .rev()
                    .find(|r| r.rect_id == rt.id)
                    .expect("previous depth row");
                let sig = (prev.combined_sigma.powi(2) + combined_sigma.powi(2)).sqrt();
                if prev.discrepancy - discrepancy > 3.0 * sig {
                    "pass".to_string()
                } else {
                    "fail".to_string()
                }
            };
            rows.push(DiscrepancyRow {
                depth: tower.n_index,
                rect_id: rt.id.clone(),
                lhs,
                rhs,
                discrepancy,
                combined_sigma,
                flag,
            });
        }
    }
    Ok(rows)
}
