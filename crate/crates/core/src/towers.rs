//! Rokhlin towers from induction data and the two rigidity-tower
//! constructions: tall towers over a single trimmed base on which a fixed
//! power of the exchange acts as one exact translation.
//!
//! Every quantitative claim made by a construction is re-verified here with
//! exact arithmetic and recorded as a certificate; a tower is returned only
//! with all its certificates holding.

use crate::iet::IetSpec;
use crate::interval::{Interval, IntervalSet};
use crate::rauzy::{
    balance_ratio, find_positive_return, InductionState, InductionTrace, IntMatrix, RauzyError,
};
use crate::scalar::{total, Scalar};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum TowerError {
    #[error(transparent)]
    Rauzy(#[from] RauzyError),
    #[error("iet error: {0}")]
    Iet(#[from] crate::iet::IetError),
    #[error("tower level {level} is not contained in a single exchanged interval")]
    LevelNotInOneInterval { level: usize },
    #[error("tower levels overlap")]
    LevelsOverlap,
    #[error("tower decomposition does not tile the interval exactly")]
    PartitionDefect,
    #[error("no recurrence hit within {max_steps} induction steps")]
    BudgetExhausted { max_steps: usize },
    #[error("no admissible parameter: {0}")]
    ParameterInfeasible(String),
    #[error("the Rauzy class contains no permutation with π(1)=d and π(d)=1")]
    NoSuitablePermutation,
    #[error("window count r must be at least 3, got {0}")]
    InvalidR(usize),
    #[error("construction requires an IET of total length 1")]
    NotNormalized,
    #[error("exact certificate failed: {0}")]
    CertificateFailed(String),
    #[error("tower height {0} exceeds the configured cap")]
    HeightOverflow(String),
    #[error("discontinuity points must be pairwise distinct")]
    DuplicateBeta,
    #[error("beta {l} is not captured by its subtower at this depth")]
    NotCaptured { l: usize },
}

/// An exactly verified inequality (or equality) with both sides recorded.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub name: String,
    pub lhs: Scalar,
    pub relation: String,
    pub rhs: Scalar,
    pub holds: bool,
}

impl Certificate {
    fn lt(name: &str, lhs: Scalar, rhs: Scalar) -> Self {
        let holds = lhs < rhs;
        Certificate {
            name: name.into(),
            lhs,
            relation: "<".into(),
            rhs,
            holds,
        }
    }
    fn le(name: &str, lhs: Scalar, rhs: Scalar) -> Self {
        let holds = lhs <= rhs;
        Certificate {
            name: name.into(),
            lhs,
            relation: "<=".into(),
            rhs,
            holds,
        }
    }
    fn gt(name: &str, lhs: Scalar, rhs: Scalar) -> Self {
        let holds = lhs > rhs;
        Certificate {
            name: name.into(),
            lhs,
            relation: ">".into(),
            rhs,
            holds,
        }
    }
    fn ge(name: &str, lhs: Scalar, rhs: Scalar) -> Self {
        let holds = lhs >= rhs;
        Certificate {
            name: name.into(),
            lhs,
            relation: ">=".into(),
            rhs,
            holds,
        }
    }
    fn eq(name: &str, lhs: Scalar, rhs: Scalar) -> Self {
        let holds = lhs == rhs;
        Certificate {
            name: name.into(),
            lhs,
            relation: "=".into(),
            rhs,
            holds,
        }
    }
}

fn require(cert: Certificate, certs: &mut Vec<Certificate>) -> Result<(), TowerError> {
    let ok = cert.holds;
    let msg = format!(
        "{}: {} {} {}",
        cert.name, cert.lhs, cert.relation, cert.rhs
    );
    certs.push(cert);
    if ok {
        Ok(())
    } else {
        Err(TowerError::CertificateFailed(msg))
    }
}

/// A Rokhlin tower of intervals: levels `base + translations[i]`, pairwise
/// disjoint, each inside a single exchanged interval of the ambient IET.
#[derive(Debug, Clone, Serialize)]
pub struct RokhlinTower {
    pub base: Interval,
    pub height: usize,
    /// Translation of level `i` relative to the base; `translations[0] = 0`.
    pub translations: Vec<Scalar>,
}

impl RokhlinTower {
    pub fn level(&self, i: usize) -> Interval {
        self.base.translate(&self.translations[i])
    }

    pub fn levels(&self) -> Vec<Interval> {
        (0..self.height).map(|i| self.level(i)).collect()
    }

    pub fn measure(&self) -> Scalar {
        self.base.length() * Scalar::from_integer(self.height as i64)
    }
}

/// Iterates `T` on `base`, producing `steps + 1` translations `t_0 = 0, …,
/// t_steps`; fails if some level straddles an exchange point (in which case
/// `T` would not act on it by a single translation).
pub fn iterate_interval(
    iet: &IetSpec,
    base: &Interval,
    steps: usize,
) -> Result<Vec<Scalar>, TowerError> {
    let mut ts = Vec::with_capacity(steps + 1);
    let mut t = Scalar::zero();
    ts.push(t.clone());
    for i in 0..steps {
        let level = base.translate(&t);
        let k = iet.locate(&level.lo)?;
        if !iet.interval(k).contains_interval(&level) {
            return Err(TowerError::LevelNotInOneInterval { level: i });
        }
        t = t + &iet.offsets()[k];
        ts.push(t.clone());
    }
    Ok(ts)
}

fn verify_disjoint(levels: &[Interval]) -> Result<(), TowerError> {
    let mut sorted: Vec<&Interval> = levels.iter().collect();
    sorted.sort_by(|a, b| a.lo.cmp(&b.lo));
    for w in sorted.windows(2) {
        if w[0].hi > w[1].lo {
            return Err(TowerError::LevelsOverlap);
        }
    }
    Ok(())
}

/// Decomposes the ambient interval into `d` Rokhlin towers over the
/// subintervals of the induced IET at the end of `trace`; heights are the
/// positional column sums of the cumulative matrix. Verifies the exact
/// partition property.
pub fn tower_decomposition(
    iet: &IetSpec,
    trace: &InductionTrace,
) -> Result<Vec<RokhlinTower>, TowerError> {
    let lens = trace.lengths_by_position();
    let heights = trace.heights_by_position();
    let sub_total = total(lens.iter());
    let mut towers = Vec::with_capacity(lens.len());
    let mut edge = Scalar::zero();
    for (j, len) in lens.iter().enumerate() {
        let base = Interval::new(edge.clone(), &edge + len);
        edge = base.hi.clone();
        let h = heights[j]
            .to_usize()
            .ok_or_else(|| TowerError::HeightOverflow(heights[j].to_string()))?;
        let ts = iterate_interval(iet, &base, h)?;
        // first return: the image of the top level must come back to I^n
        let ret = base.translate(&ts[h]);
        if !(ret.lo >= Scalar::zero() && ret.hi <= sub_total) {
            return Err(TowerError::PartitionDefect);
        }
        towers.push(RokhlinTower {
            base,
            height: h,
            translations: ts[..h].to_vec(),
        });
    }
    // exact tiling of [0, |λ|) by all levels
    let mut all: Vec<Interval> = towers.iter().flat_map(|t| t.levels()).collect();
    all.sort_by(|a, b| a.lo.cmp(&b.lo));
    let mut edge = Scalar::zero();
    for iv in &all {
        if iv.lo != edge {
            return Err(TowerError::PartitionDefect);
        }
        edge = iv.hi.clone();
    }
    if &edge != iet.total() {
        return Err(TowerError::PartitionDefect);
    }
    Ok(towers)
}

/// Which construction produced a rigidity tower.
#[derive(Debug, Clone, Serialize)]
pub enum RigidityKind {
    /// Tall tower over the leftmost induced subinterval; `T^q` translates the
    /// whole tower by `gamma / q`.
    Linear { gamma: Scalar },
    /// Double-stacked tower (heights `s_1 + s_d`); `T^q` translates by
    /// `lambda_gap = λ_d - λ_1` of the induced lengths.
    Constant {
        lambda_gap: Scalar,
        s1: usize,
        sd: usize,
        /// `r` subtower bases inside `J`, in order.
        subtower_bases: Vec<Interval>,
    },
}

/// A rigidity tower `W = ∪_{i<q} T^i J` with `J = Δ ∩ T^{-q}Δ ∩ T^{-2q}Δ`.
#[derive(Debug, Clone, Serialize)]
pub struct RigidityTower {
    /// Induction step index at which the tower was built.
    pub n_index: usize,
    /// Base `Δ` of the dominating tower.
    pub delta: Interval,
    pub q: usize,
    /// Level translations of the `Δ`-tower, `i < q` (shared by the `J`-tower).
    pub translations: Vec<Scalar>,
    pub j: Interval,
    /// `T^q x - x`, constant on `W` (and on all of `Δ`).
    pub displacement: Scalar,
    /// `Leb(W) = q · |J|`.
    pub measure: Scalar,
    /// Length of the induced interval `I^n` at the hit.
    pub i_len: Scalar,
    pub kind: RigidityKind,
    pub certificates: Vec<Certificate>,
}

impl RigidityTower {
    pub fn w_level(&self, i: usize) -> Interval {
        self.j.translate(&self.translations[i])
    }

    pub fn w_levels(&self) -> Vec<Interval> {
        (0..self.q).map(|i| self.w_level(i)).collect()
    }

    pub fn w_set(&self) -> IntervalSet {
        IntervalSet::from_intervals(self.w_levels())
    }

    /// Translation valid on `J` for powers `k < 3q`: `T^k u = u + tau(k)`.
    pub fn tau(&self, k: usize) -> Scalar {
        let wraps = k / self.q;
        assert!(wraps <= 2, "tau defined for k < 3q");
        &self.translations[k % self.q]
            + &self.displacement * Scalar::from_integer(wraps as i64)
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        (0..self.q).any(|i| self.w_level(i).contains(x))
    }
}

/// Exact preimage `T^{-1}(S)` of an interval set.
pub fn preimage_set(iet: &IetSpec, s: &IntervalSet) -> IntervalSet {
    let mut parts = Vec::new();
    for k in 0..iet.d() {
        let image = iet.interval(k).translate(&iet.offsets()[k]);
        for iv in s.parts() {
            let cap = image.intersect(iv);
            if !cap.is_empty() {
                parts.push(cap.translate(&-iet.offsets()[k].clone()));
            }
        }
    }
    IntervalSet::from_intervals(parts)
}

/// Search budget for the rigidity-tower constructions.
#[derive(Debug, Clone, Copy)]
pub struct TowerBudget {
    pub max_steps: usize,
    pub max_hits: usize,
    /// Towers taller than this are not materialized.
    pub max_height: usize,
}

impl Default for TowerBudget {
    fn default() -> Self {
        TowerBudget {
            max_steps: 512,
            max_hits: 4,
            max_height: 4_000_000,
        }
    }
}

fn rational_scalar(r: &BigRational) -> Scalar {
    Scalar::from_rational(r.clone())
}

/// Largest `δ = k/2^20 < ε/6` with `(1-3δ)(1-ρδ/(1-δ)) > 1-ε`, found by
/// binary search (the left side is decreasing in δ on the admissible range).
fn choose_delta_linear(epsilon: &Scalar, rho: &Scalar) -> Result<Scalar, TowerError> {
    let eps = match epsilon {
        Scalar::Rational(r) => r.clone(),
        _ => {
            return Err(TowerError::ParameterInfeasible(
                "epsilon must be rational".into(),
            ))
        }
    };
    let bound = eps / BigRational::from_integer(BigInt::from(6));
    let passes = |delta: &Scalar| -> bool {
        let one = Scalar::one();
        let lhs =
            (&one - Scalar::from_integer(3) * delta) * (&one - rho * delta / (&one - delta));
        lhs > &one - epsilon
    };
    // k ranges over integers with 1 <= k, k/2^20 < ε/6
    let grid = BigRational::from_integer(BigInt::from(1i64 << 20));
    let mut hi_k: i64 = (&bound * &grid)
        .floor()
        .to_integer()
        .to_i64()
        .unwrap_or(i64::MAX);
    while hi_k >= 1 && BigRational::new(BigInt::from(hi_k), BigInt::from(1i64 << 20)) >= bound {
        hi_k -= 1;
    }
    if hi_k < 1 {
        return Err(TowerError::ParameterInfeasible(
            "epsilon too small for the dyadic grid".into(),
        ));
    }
    let dy = |k: i64| Scalar::from_ratio(k, 1 << 20);
    if passes(&dy(hi_k)) {
        return Ok(dy(hi_k));
    }
    let (mut lo, mut hi) = (0i64, hi_k);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if passes(&dy(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo >= 1 && passes(&dy(lo)) {
        Ok(dy(lo))
    } else {
        Err(TowerError::ParameterInfeasible(format!(
            "no dyadic delta below {} satisfies the measure inequality",
            bound
        )))
    }
}

struct HitScan {
    state: InductionState,
    cumulative: IntMatrix,
    step: usize,
    tied: bool,
}

impl HitScan {
    fn new(iet: &IetSpec) -> Self {
        HitScan {
            state: InductionState::new(iet.pi(), iet.lengths()),
            cumulative: IntMatrix::identity(iet.d()),
            step: 0,
            tied: false,
        }
    }

    /// Advances one induction step; `false` on an exact tie (stop).
    fn advance(&mut self) -> bool {
        let mut probe = self.state.clone();
        match probe.step_public() {
            None => {
                self.tied = true;
                false
            }
            Some((row, col)) => {
                self.state = probe;
                self.cumulative.mul_elementary_in_place(row, col);
                self.step += 1;
                true
            }
        }
    }

    fn stop_error(&self, max_steps: usize) -> TowerError {
        if self.tied {
            TowerError::Rauzy(RauzyError::KeaneViolation {
                at_step: self.step + 1,
            })
        } else {
            TowerError::BudgetExhausted { max_steps }
        }
    }
}

/// Options shared by the two constructions.
#[derive(Debug, Clone, Default)]
pub struct ReferenceChoice {
    /// Length vector used to derive the positive-return matrix `B`; defaults
    /// to the input lengths.
    pub lambda0: Option<Vec<Scalar>>,
}

/// Builds rigidity towers for the constant-slope mechanism: searches the
/// induction orbit for steps where the leftmost induced interval carries
/// almost all mass, and stacks the tower of its return words over the triple
/// intersection `J`.
pub fn build_w_linear(
    iet: &IetSpec,
    epsilon: &Scalar,
    budget: TowerBudget,
    reference: &ReferenceChoice,
) -> Result<Vec<RigidityTower>, TowerError> {
    if iet.total() != &Scalar::one() {
        return Err(TowerError::NotNormalized);
    }
    if !epsilon.is_positive() || *epsilon >= Scalar::one() {
        return Err(TowerError::ParameterInfeasible(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    if budget.max_steps == 0 || budget.max_hits == 0 {
        return Err(TowerError::BudgetExhausted {
            max_steps: budget.max_steps,
        });
    }
    let pi = iet.pi().clone();
    let d = iet.d();
    let lambda0 = reference.lambda0.clone().unwrap_or_else(|| iet.lengths().to_vec());
    let (_m, tr_b) = find_positive_return(&pi, &lambda0, budget.max_steps)?;
    let rho_q = balance_ratio(&tr_b.cumulative)?;
    let rho = rational_scalar(&rho_q);
    let delta = choose_delta_linear(epsilon, &rho)?;

    let one = Scalar::one();
    let lower1 = &one - &delta; // λ₁ > (1-δ)|λ|
    let lower_j = &delta / Scalar::from_integer(2 * d as i64); // λ_j > δ/(2d)|λ|

    let mut towers: Vec<RigidityTower> = Vec::new();
    let mut scan = HitScan::new(iet);
    let mut last_q = 0usize;
    while scan.step < budget.max_steps && towers.len() < budget.max_hits {
        if !scan.advance() {
            break; // exact tie: the orbit ends here
        }
        if scan.state.pi() != pi {
            continue;
        }
        let lens = scan.state.lengths_by_position();
        let tot = total(lens.iter());
        // Y-membership, scaled to avoid divisions
        if !(lens[0].clone() > &lower1 * &tot) {
            continue;
        }
        if !(1..d).all(|j| lens[j].clone() > &lower_j * &tot) {
            continue;
        }
        if !scan.cumulative.is_strictly_positive() {
            continue;
        }
        if balance_ratio(&scan.cumulative)? > rho_q {
            continue;
        }
        let heights = positional_heights(&scan.cumulative, &scan.state);
        let q = match heights[0].to_usize() {
            Some(q) if q <= budget.max_height => q,
            _ => break,
        };
        if q <= last_q {
            continue;
        }
        // displacement of T^q on Δ = I₁: sum of the induced lengths whose
        // image precedes the image of the first interval
        let c = (0..d)
            .filter(|&i| pi.image(i) < pi.image(0))
            .fold(Scalar::zero(), |acc, i| acc + &lens[i]);
        let delta_iv = Interval::new(Scalar::zero(), lens[0].clone());
        let two_c = Scalar::from_integer(2) * &c;
        if delta_iv.length() <= two_c {
            continue; // empty triple intersection at this hit
        }
        let mut certs = Vec::new();
        let tower = build_tower_at_hit(
            iet,
            scan.step,
            delta_iv,
            q,
            c.clone(),
            tot.clone(),
            RigidityKind::Linear {
                gamma: Scalar::from_integer(q as i64) * &c,
            },
            &mut certs,
        )?;
        // (lebeg): Leb(W) > 1-ε
        require(
            Certificate::gt("tower_measure", tower.measure.clone(), &one - epsilon),
            &mut certs,
        )?;
        // GRAN lower bound: γ ≥ (δ/2d)(1-ρδ/(1-δ))
        let gamma = Scalar::from_integer(q as i64) * &c;
        let gran = &lower_j * (&one - &rho * &delta / (&one - &delta));
        require(Certificate::ge("gamma_lower", gamma, gran), &mut certs)?;
        let mut tower = tower;
        tower.certificates = certs;
        last_q = q;
        towers.push(tower);
    }
    if towers.is_empty() {
        Err(scan.stop_error(budget.max_steps))
    } else {
        Ok(towers)
    }
}

/// Builds rigidity towers for the piecewise-constant mechanism: double
/// towers of height `s_1 + s_d` at steps where the first and last induced
/// intervals both carry nearly half the mass, plus `r` disjoint subtowers.
pub fn build_w_constant(
    iet: &IetSpec,
    epsilon: &Scalar,
    r: usize,
    budget: TowerBudget,
    reference: &ReferenceChoice,
) -> Result<Vec<RigidityTower>, TowerError> {
    if iet.total() != &Scalar::one() {
        return Err(TowerError::NotNormalized);
    }
    if r < 3 {
        return Err(TowerError::InvalidR(r));
    }
    if budget.max_steps == 0 || budget.max_hits == 0 {
        return Err(TowerError::BudgetExhausted {
            max_steps: budget.max_steps,
        });
    }
    let d = iet.d();
    let pi = iet.pi().clone();
    // the construction needs a permutation sending 1 to the end and d to the start
    let pi0 = if pi.image(0) == d - 1 && pi.image(d - 1) == 0 {
        pi.clone()
    } else {
        crate::rauzy::rauzy_class(&pi)
            .into_iter()
            .find(|p| p.image(0) == d - 1 && p.image(d - 1) == 0)
            .ok_or(TowerError::NoSuitablePermutation)?
    };
    let lambda0 = reference.lambda0.clone().unwrap_or_else(|| iet.lengths().to_vec());
    let (_m, tr_b) = find_positive_return(&pi0, &lambda0, budget.max_steps)?;
    let rho_q = balance_ratio(&tr_b.cumulative)?;
    let rho = rational_scalar(&rho_q);

    // ε < min(1/(10ρ), 1/(8(2r+1)))
    let cap1 = Scalar::one() / (Scalar::from_integer(10) * &rho);
    let cap2 = Scalar::from_ratio(1, 8 * (2 * r as i64 + 1));
    let cap = if cap1 < cap2 { cap1 } else { cap2 };
    if !epsilon.is_positive() || *epsilon >= cap {
        return Err(TowerError::ParameterInfeasible(format!(
            "epsilon must lie in (0, {cap}), got {epsilon}"
        )));
    }
    // δ = (15/32)ε ∈ (ε/3, ε/2); δ' = δ - ε/(8ρ), clipped into (ε/3, δ)
    let delta = Scalar::from_ratio(15, 32) * epsilon;
    let mut delta_p = &delta - epsilon / (Scalar::from_integer(8) * &rho);
    let third = epsilon / Scalar::from_integer(3);
    if delta_p <= third {
        delta_p = (&third + &delta) / Scalar::from_integer(2);
    }
    debug_assert!(third < delta_p && delta_p < delta);
    debug_assert!(&delta - &delta_p < epsilon / (Scalar::from_integer(4) * &rho));
    let width = (&delta - &delta_p) / Scalar::from_integer(4);
    let half = Scalar::from_ratio(1, 2);
    let lo1 = &half - &delta;
    let hi1 = &lo1 + &width;
    let lod = &half + &delta_p;
    let hid = &lod + &width;

    let mut towers: Vec<RigidityTower> = Vec::new();
    let mut scan = HitScan::new(iet);
    let mut last_q = 0usize;
    while scan.step < budget.max_steps && towers.len() < budget.max_hits {
        if !scan.advance() {
            break;
        }
        if scan.state.pi() != pi0 {
            continue;
        }
        let lens = scan.state.lengths_by_position();
        let tot = total(lens.iter());
        let in_y = lens[0].clone() > &lo1 * &tot
            && lens[0].clone() < &hi1 * &tot
            && lens[d - 1].clone() > &lod * &tot
            && lens[d - 1].clone() < &hid * &tot;
        if !in_y {
            continue;
        }
        if !scan.cumulative.is_strictly_positive() {
            continue;
        }
        if balance_ratio(&scan.cumulative)? > rho_q {
            continue;
        }
        let heights = positional_heights(&scan.cumulative, &scan.state);
        let (s1, sd) = match (heights[0].to_usize(), heights[d - 1].to_usize()) {
            (Some(a), Some(b)) if a + b <= budget.max_height => (a, b),
            _ => break,
        };
        let q = s1 + sd;
        if q <= last_q {
            continue;
        }
        let c = &lens[d - 1] - &lens[0]; // λ_d - λ_1 > 0 in the target region
        if !c.is_positive() {
            continue;
        }
        let delta_iv = Interval::new(Scalar::zero(), lens[0].clone());
        if delta_iv.length() <= Scalar::from_integer(2) * &c {
            continue;
        }
        let mut certs = Vec::new();
        // (szacwiez1): ε/2 |I| < λ_d - λ_1 < 2δ |I|
        require(
            Certificate::lt("gap_lower", epsilon / Scalar::from_integer(2) * &tot, c.clone()),
            &mut certs,
        )?;
        require(
            Certificate::lt("gap_upper", c.clone(), Scalar::from_integer(2) * &delta * &tot),
            &mut certs,
        )?;
        let j_len = &lens[0] - Scalar::from_integer(2) * &c;
        // (miarajn): |J| > |I|/4
        require(
            Certificate::gt("j_lower", j_len.clone(), &tot / Scalar::from_integer(4)),
            &mut certs,
        )?;
        let subtower_bases: Vec<Interval> = (1..=r)
            .map(|l| {
                let den = Scalar::from_integer(2 * r as i64 + 1);
                Interval::new(
                    Scalar::from_integer(2 * l as i64 - 1) * &j_len / &den,
                    Scalar::from_integer(2 * l as i64) * &j_len / &den,
                )
            })
            .collect();
        let tower = build_tower_at_hit(
            iet,
            scan.step,
            delta_iv,
            q,
            c.clone(),
            tot.clone(),
            RigidityKind::Constant {
                lambda_gap: c.clone(),
                s1,
                sd,
                subtower_bases,
            },
            &mut certs,
        )?;
        // the s1-level must land inside the last induced interval (inc:s1)
        let s1_level = tower.delta.translate(&tower.translations[s1 % q]);
        let last_sub_lo = &tot - &lens[d - 1]; // within I^n coordinates...
        let holds = s1_level.lo >= last_sub_lo && s1_level.hi <= tot;
        require(
            Certificate {
                name: "s1_image_in_last".into(),
                lhs: s1_level.lo.clone(),
                relation: if holds { ">=" } else { "!>=" }.into(),
                rhs: last_sub_lo,
                holds,
            },
            &mut certs,
        )?;
        // Leb(W) ≥ 1/(4ρ)
        require(
            Certificate::ge(
                "tower_measure_floor",
                tower.measure.clone(),
                Scalar::one() / (Scalar::from_integer(4) * &rho),
            ),
            &mut certs,
        )?;
        let mut tower = tower;
        tower.certificates = certs;
        last_q = q;
        towers.push(tower);
    }
    if towers.is_empty() {
        Err(scan.stop_error(budget.max_steps))
    } else {
        Ok(towers)
    }
}

fn positional_heights(cumulative: &IntMatrix, state: &InductionState) -> Vec<BigInt> {
    let sums = cumulative.column_sums();
    (0..state.d())
        .map(|j| sums[state.label_at_position(j)].clone())
        .collect()
}

/// Shared tail of both constructions: iterate the Δ-tower, verify that `T^q`
/// is the translation by `c` on `Δ`, trim to `J`, and check disjointness and
/// the direct orbit oracle.
#[allow(clippy::too_many_arguments)]
fn build_tower_at_hit(
    iet: &IetSpec,
    n_index: usize,
    delta_iv: Interval,
    q: usize,
    c: Scalar,
    i_len: Scalar,
    kind: RigidityKind,
    certs: &mut Vec<Certificate>,
) -> Result<RigidityTower, TowerError> {
    let ts = iterate_interval(iet, &delta_iv, q)?;
    // T^q Δ = Δ + c, exactly
    let shifted = delta_iv.translate(&c);
    let top = delta_iv.translate(&ts[q]);
    if top != shifted {
        return Err(TowerError::CertificateFailed(format!(
            "T^q(delta) = {top} differs from delta + c = {shifted}"
        )));
    }
    let j = Interval::new(
        delta_iv.lo.clone(),
        &delta_iv.hi - Scalar::from_integer(2) * &c,
    );
    let translations = ts[..q].to_vec();
    let levels: Vec<Interval> = translations.iter().map(|t| j.translate(t)).collect();
    verify_disjoint(&levels)?;
    let measure = j.length() * Scalar::from_integer(q as i64);
    // displacement certificates: T^{2q} moves by 2c and stays within I^n-size
    require(
        Certificate::le(
            "sup_disp_2q",
            Scalar::from_integer(2) * c.abs(),
            i_len.clone(),
        ),
        certs,
    )?;
    // direct orbit oracle on the base endpoints
    let lo_q = iet.apply(&j.lo, q as i64)?;
    require(
        Certificate::eq("orbit_oracle_lo", lo_q, &j.lo + &c),
        certs,
    )?;
    let mid = j.midpoint();
    let mid_2q = iet.apply(&mid, 2 * q as i64)?;
    require(
        Certificate::eq(
            "orbit_oracle_mid_2q",
            mid_2q,
            &mid + Scalar::from_integer(2) * &c,
        ),
        certs,
    )?;
    Ok(RigidityTower {
        n_index,
        delta: delta_iv,
        q,
        translations,
        j,
        displacement: c,
        measure,
        i_len,
        kind,
        certificates: Vec::new(),
    })
}

/// The `r` window towers `V_l = ∪_{i<q} T^{-i} [β_l - c, β_l)` of a
/// constant-kind rigidity tower, with its exact total mass.
#[derive(Debug, Clone, Serialize)]
pub struct DiscontinuityWindows {
    /// Window levels per discontinuity, each a union of `q` intervals.
    pub windows: Vec<IntervalSet>,
    pub total_mass: Scalar,
    pub certificates: Vec<Certificate>,
}

pub fn discontinuity_windows(
    iet: &IetSpec,
    tower: &RigidityTower,
    betas: &[Scalar],
) -> Result<DiscontinuityWindows, TowerError> {
    let (c, subtower_bases) = match &tower.kind {
        RigidityKind::Constant {
            lambda_gap,
            subtower_bases,
            ..
        } => (lambda_gap.clone(), subtower_bases.clone()),
        RigidityKind::Linear { .. } => {
            return Err(TowerError::ParameterInfeasible(
                "windows require a constant-kind tower".into(),
            ))
        }
    };
    if betas.len() != subtower_bases.len() {
        return Err(TowerError::ParameterInfeasible(format!(
            "expected {} discontinuity points, got {}",
            subtower_bases.len(),
            betas.len()
        )));
    }
    for (i, b) in betas.iter().enumerate() {
        for b2 in betas.iter().skip(i + 1) {
            if b == b2 {
                return Err(TowerError::DuplicateBeta);
            }
        }
    }
    let q = tower.q;
    let r = betas.len();
    let mut certs = Vec::new();
    let mut windows = Vec::with_capacity(r);
    let mut all_parts: Vec<Interval> = Vec::with_capacity(r * q);
    for (l0, beta) in betas.iter().enumerate() {
        // locate the subtower level containing β
        let base_l = &subtower_bases[l0];
        let k = (0..q)
            .find(|&k| base_l.translate(&tower.translations[k]).contains(beta))
            .ok_or(TowerError::NotCaptured { l: l0 + 1 })?;
        // doubled cell: [(2l-2)|J|/(2r+1), 2l|J|/(2r+1)) + t_k must contain
        // [β - 2c, β)
        let den = Scalar::from_integer(2 * r as i64 + 1);
        let j_len = tower.j.length();
        let doubled = Interval::new(
            Scalar::from_integer(2 * (l0 as i64 + 1) - 2) * &j_len / &den,
            Scalar::from_integer(2 * (l0 as i64 + 1)) * &j_len / &den,
        );
        let doubled_k = doubled.translate(&tower.translations[k]);
        let reach = Interval::new(beta - Scalar::from_integer(2) * &c, beta.clone());
        if !doubled_k.contains_interval(&reach) {
            return Err(TowerError::CertificateFailed(format!(
                "window margin: [{}, {}) escapes its doubled cell {doubled_k}",
                reach.lo, reach.hi
            )));
        }
        let s = Interval::new(beta - &c, beta.clone());
        let mut parts = Vec::with_capacity(q);
        for i in 0..q {
            let part = if i <= k {
                s.translate(&(&tower.translations[k - i] - &tower.translations[k]))
            } else {
                // T^{-i} S = T^{q-i}(S - c), landing in level k + q - i
                let back = s.translate(&-c.clone());
                back.translate(&(&tower.translations[k + q - i] - &tower.translations[k]))
            };
            parts.push(part);
        }
        // spot-check the translation algebra against the direct orbit
        for &i in &[0usize, 1, k, q - 1] {
            if i < q {
                let img = iet.apply(&parts[i].lo, i as i64)?;
                if img != s.lo {
                    return Err(TowerError::CertificateFailed(format!(
                        "window orbit oracle failed at i={i}"
                    )));
                }
            }
        }
        all_parts.extend(parts.iter().cloned());
        windows.push(IntervalSet::from_intervals(parts));
    }
    verify_disjoint(&all_parts)?;
    let w = tower.w_set();
    for (l0, win) in windows.iter().enumerate() {
        if !win.is_subset_of(&w) {
            return Err(TowerError::CertificateFailed(format!(
                "window {} is not contained in W",
                l0 + 1
            )));
        }
    }
    let total_mass = windows
        .iter()
        .fold(Scalar::zero(), |acc, w| acc + w.measure());
    let expected =
        Scalar::from_integer(r as i64) * &c * Scalar::from_integer(q as i64);
    require(
        Certificate::eq("window_mass", total_mass.clone(), expected),
        &mut certs,
    )?;
    Ok(DiscontinuityWindows {
        windows,
        total_mass,
        certificates: certs,
    })
}

/// Exact rigidity diagnostics of a tower.
#[derive(Debug, Clone, Serialize)]
pub struct RigidityDiagnostic {
    /// `sup_{x∈W} |T^q x - x|`, constant by construction.
    pub sup_disp_q: Scalar,
    pub sup_disp_2q: Scalar,
    /// `Leb(W △ T^{-1} W)`.
    pub boundary_measure: Scalar,
    pub certificates: Vec<Certificate>,
}

pub fn rigidity_diagnostic(iet: &IetSpec, tower: &RigidityTower) -> RigidityDiagnostic {
    let sup_q = tower.displacement.abs();
    let sup_2q = Scalar::from_integer(2) * &sup_q;
    let w = tower.w_set();
    let pre = preimage_set(iet, &w);
    let boundary = w.symmetric_difference(&pre).measure();
    let two_j = Scalar::from_integer(2) * tower.j.length();
    let certificates = vec![
        Certificate::le("boundary_le_2j", boundary.clone(), two_j),
        Certificate::le("sup_disp_q_le_ilen", sup_q.clone(), tower.i_len.clone()),
        Certificate::le("sup_disp_2q_le_ilen", sup_2q.clone(), tower.i_len.clone()),
    ];
    RigidityDiagnostic {
        sup_disp_q: sup_q,
        sup_disp_2q: sup_2q,
        boundary_measure: boundary,
        certificates,
    }
}

/// Sampled exact supremum of `|g^{(q)}(T^q x) - g^{(q)}(x)|` over `W`,
/// using the constant-displacement identity for the sum.
pub fn ac_rigidity_check(
    g: &crate::roof::PiecewiseAffine,
    iet: &IetSpec,
    tower: &RigidityTower,
    samples: usize,
) -> Result<Scalar, TowerError> {
    let q = tower.q;
    let mut sup = Scalar::zero();
    let n = samples.max(1);
    for s in 0..n {
        // spread deterministic sample points over levels and positions
        let level = (s * 7919) % q;
        let frac = Scalar::from_ratio((2 * (s as i64 % 16) + 1) % 32, 32);
        let u = &tower.j.lo + tower.j.length() * frac;
        let x = &u + &tower.translations[level];
        // Σ_{i<q} [g(T^i x + c) - g(T^i x)] with T^{q+i}x = T^i x + c
        let mut acc = Scalar::zero();
        let mut y = x.clone();
        for _ in 0..q {
            let shifted = &y + &tower.displacement;
            acc = acc + g.evaluate(&shifted).map_err(|e| {
                TowerError::CertificateFailed(format!("sample left the domain: {e}"))
            })? - g.evaluate(&y).map_err(|e| {
                TowerError::CertificateFailed(format!("sample left the domain: {e}"))
            })?;
            y = iet.forward(&y)?;
        }
        let a = acc.abs();
        if a > sup {
            sup = a;
        }
    }
    Ok(sup)
}
