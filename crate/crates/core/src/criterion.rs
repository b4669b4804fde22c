//! Displacement distributions over rigidity towers, the non-reversibility
//! criterion check, and the end-to-end pipeline.
//!
//! The central object is the exact pushforward of the displacement cocycle
//! `x ↦ f^{(q)}(T^q x) - f^{(q)}(x)` under normalized Lebesgue measure on a
//! rigidity tower `W`: the criterion asks this distribution to be purely
//! atomic with enough mass off zero and no pair of atoms symmetric about 0.

use crate::iet::IetSpec;
use crate::interval::Interval;
use crate::roof::{birkhoff_sum, center_on_tower, PiecewiseAffine, PiecewiseRoof, RoofError};
use crate::scalar::Scalar;
use crate::towers::{
    ac_rigidity_check, build_w_constant, build_w_linear, discontinuity_windows,
    rigidity_diagnostic, Certificate, ReferenceChoice, RigidityTower, TowerBudget,
    TowerError,
};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CriterionError {
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error("roof error: {0}")]
    Roof(#[from] RoofError),
    #[error("iet error: {0}")]
    Iet(#[from] crate::iet::IetError),
    #[error("refinement exceeded the cell budget ({cells} > {budget})")]
    RefinementExplosion { cells: usize, budget: usize },
    #[error("the measure has non-atomic mass {0} beyond tolerance")]
    NotAtomic(String),
    #[error("roof has jumps of opposite value: {0} and {1}")]
    OppositeJumps(String, String),
    #[error("case unsupported: {0}")]
    CaseUnsupported(String),
    #[error("case 1 requires the roof to be continuous over the exchanged intervals")]
    JumpOffExchange,
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(String),
    #[error("mass oracle mismatch: {0}")]
    MassMismatch(String),
}

/// A finite weighted atom list, sorted by value, with a clustering tolerance
/// for imported inexact data (exact data uses tolerance 0).
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<(Scalar, Scalar)>,
    pub cluster_tol: Scalar,
    pub total: Scalar,
}

impl EmpiricalMeasure {
    /// Sorts atoms by value and merges runs closer than `cluster_tol`
    /// (mass-weighted representative value).
    pub fn new(mut atoms: Vec<(Scalar, Scalar)>, cluster_tol: Scalar) -> Self {
        atoms.retain(|(_, m)| !m.is_zero());
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Scalar, Scalar)> = Vec::with_capacity(atoms.len());
        for (v, m) in atoms {
            match merged.last_mut() {
                Some((lv, lm)) if (&v - &*lv).abs() <= cluster_tol => {
                    let new_mass = &*lm + &m;
                    let weighted = (&*lv * &*lm + &v * &m) / &new_mass;
                    *lv = weighted;
                    *lm = new_mass;
                }
                _ => merged.push((v, m)),
            }
        }
        let total = merged.iter().fold(Scalar::zero(), |acc, (_, m)| acc + m);
        EmpiricalMeasure {
            atoms: merged,
            cluster_tol,
            total,
        }
    }

    pub fn mass_at(&self, v: &Scalar) -> Scalar {
        self.atoms
            .iter()
            .find(|(a, _)| (a - v).abs() <= self.cluster_tol)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(Scalar::zero)
    }
}

/// Exact pushforward of a piecewise-affine observable: atoms plus the mass
/// carried on genuinely sloped cells (absolutely continuous part).
#[derive(Debug, Clone, Serialize)]
pub struct PushforwardMeasure {
    pub atoms: Vec<(Scalar, Scalar)>,
    pub ac_mass: Scalar,
    /// Hull of the values attained on sloped cells, when any.
    pub ac_support: Option<(Scalar, Scalar)>,
    pub total: Scalar,
}

impl PushforwardMeasure {
    fn from_parts(atom_map: BTreeMap<Scalar, Scalar>, ac: Vec<(Scalar, Scalar, Scalar)>) -> Self {
        let atoms: Vec<(Scalar, Scalar)> = atom_map.into_iter().collect();
        let mut ac_mass = Scalar::zero();
        let mut hull: Option<(Scalar, Scalar)> = None;
        for (lo, hi, mass) in ac {
            ac_mass = ac_mass + mass;
            hull = Some(match hull {
                None => (lo, hi),
                Some((l, h)) => (if lo < l { lo } else { l }, if hi > h { hi } else { h }),
            });
        }
        let total = atoms.iter().fold(ac_mass.clone(), |acc, (_, m)| acc + m);
        PushforwardMeasure {
            atoms,
            ac_mass,
            ac_support: hull,
            total,
        }
    }

    /// Converts to an atomic measure; fails if there is absolutely
    /// continuous mass beyond the tolerance.
    pub fn to_empirical(&self, cluster_tol: Scalar) -> Result<EmpiricalMeasure, CriterionError> {
        if self.ac_mass > cluster_tol {
            return Err(CriterionError::NotAtomic(self.ac_mass.to_string()));
        }
        Ok(EmpiricalMeasure::new(self.atoms.clone(), cluster_tol))
    }
}

/// Joint pushforward of `(f^{(2q)} - 2a, f^{(q)} - a)` on `W`.
#[derive(Debug, Clone, Serialize)]
pub struct PairMeasure {
    pub atoms: Vec<((Scalar, Scalar), Scalar)>,
    pub ac_mass: Scalar,
    pub total: Scalar,
}

struct Event {
    lo: Scalar,
    hi: Scalar,
    k: usize,
    value: Scalar,
}

/// Exact displacement distribution `(f^{(q)}∘T^q - f^{(q)})_* μ_W`.
///
/// Uniform-slope roofs (in particular piecewise-constant ones and the linear
/// part of a decomposition) take an event-sweep path whose output is purely
/// atomic; general roofs take a per-level refinement bounded by
/// `cell_budget`.
pub fn displacement_distribution(
    f: &PiecewiseAffine,
    iet: &IetSpec,
    tower: &RigidityTower,
    cell_budget: usize,
) -> Result<PushforwardMeasure, CriterionError> {
    match f.uniform_slope() {
        Some(s) => displacement_uniform(f, &s, tower),
        None => displacement_general(f, iet, tower, cell_budget),
    }
}

fn displacement_uniform(
    f: &PiecewiseAffine,
    slope: &Scalar,
    tower: &RigidityTower,
) -> Result<PushforwardMeasure, CriterionError> {
    let q = tower.q;
    let c = &tower.displacement;
    let j_iv = &tower.j;
    let base_value = Scalar::from_integer(q as i64) * slope * c;
    let jumps = f.jumps();
    // events: for k < 2q-1 and each jump (β, d), the u-window where the
    // shifted pair straddles β
    let mut events: Vec<Event> = Vec::new();
    for k in 0..2 * q {
        if k + 1 == 2 * q {
            continue; // k = 2q-1 contributes to no window [j, j+q), j < q
        }
        let tau = tower.tau(k);
        for (beta, d) in &jumps {
            let lo = beta - c - &tau;
            let hi = beta - &tau;
            let lo = if lo > j_iv.lo { lo } else { j_iv.lo.clone() };
            let hi = if hi < j_iv.hi { hi } else { j_iv.hi.clone() };
            if lo < hi {
                events.push(Event {
                    lo,
                    hi,
                    k,
                    value: d.clone(),
                });
            }
        }
    }
    // cell grid: all event endpoints inside J
    let mut cuts: Vec<Scalar> = Vec::with_capacity(2 * events.len() + 2);
    cuts.push(j_iv.lo.clone());
    cuts.push(j_iv.hi.clone());
    for e in &events {
        cuts.push(e.lo.clone());
        cuts.push(e.hi.clone());
    }
    cuts.sort();
    cuts.dedup();
    events.sort_by(|a, b| a.lo.cmp(&b.lo));

    let mut atom_map: BTreeMap<Scalar, Scalar> = BTreeMap::new();
    let mut active: Vec<&Event> = Vec::new();
    let mut next_event = 0usize;
    for cell in cuts.windows(2) {
        let (clo, chi) = (&cell[0], &cell[1]);
        let width = chi - clo;
        while next_event < events.len() && &events[next_event].lo <= clo {
            active.push(&events[next_event]);
            next_event += 1;
        }
        active.retain(|e| &e.hi > clo);
        // the grid contains all endpoints, so active events cover this cell
        // entirely; event k contributes to levels j ∈ [max(0,k+1-q), min(k,q-1)]
        let mut deltas: Vec<(usize, Scalar)> = Vec::with_capacity(2 * active.len());
        for e in &active {
            let jlo = (e.k + 1).saturating_sub(q);
            let jhi = e.k.min(q - 1);
            deltas.push((jlo, e.value.clone()));
            deltas.push((jhi + 1, -e.value.clone()));
        }
        deltas.sort_by_key(|(j, _)| *j);
        let mut acc = Scalar::zero();
        let mut pos = 0usize;
        let mut idx = 0usize;
        while pos < q {
            while idx < deltas.len() && deltas[idx].0 <= pos {
                acc = &acc + &deltas[idx].1;
                idx += 1;
            }
            let next_pos = if idx < deltas.len() {
                deltas[idx].0.min(q)
            } else {
                q
            };
            let run = (next_pos - pos) as i64;
            if run > 0 {
                let v = &base_value + &acc;
                let m = Scalar::from_integer(run) * &width;
                let e = atom_map.entry(v).or_insert_with(Scalar::zero);
                *e = &*e + &m;
            }
            pos = next_pos;
        }
    }
    let measure = PushforwardMeasure::from_parts(atom_map, Vec::new());
    normalize_and_check(measure, tower)
}

fn normalize_and_check(
    m: PushforwardMeasure,
    tower: &RigidityTower,
) -> Result<PushforwardMeasure, CriterionError> {
    if m.total != tower.measure {
        return Err(CriterionError::MassMismatch(format!(
            "pushforward total {} differs from Leb(W) = {}",
            m.total, tower.measure
        )));
    }
    let scale = tower.measure.clone();
    let atoms = m
        .atoms
        .into_iter()
        .map(|(v, mass)| (v, mass / &scale))
        .collect();
    let ac_mass = m.ac_mass / &scale;
    Ok(PushforwardMeasure {
        atoms,
        ac_mass,
        ac_support: m.ac_support,
        total: Scalar::one(),
    })
}

/// Cut caused by a shifted copy of the roof crossing a piece boundary.
#[derive(Clone)]
struct CutEvent {
    pos: Scalar,
    slope_delta: Scalar,
    value_jump: Scalar,
}

fn cuts_for_shift(
    f: &PiecewiseAffine,
    j_iv: &Interval,
    shift: &Scalar,
    sign: i32,
    out: &mut Vec<CutEvent>,
) {
    let pieces = f.pieces();
    for p in 1..pieces.len() {
        let pos = &pieces[p].start - shift;
        if pos > j_iv.lo && pos < j_iv.hi {
            let slope_delta = &pieces[p].slope - &pieces[p - 1].slope;
            let value_jump = &pieces[p].left_value - f.left_limit(&pieces[p].start);
            let s = Scalar::from_integer(sign as i64);
            out.push(CutEvent {
                pos,
                slope_delta: &s * slope_delta,
                value_jump: s * value_jump,
            });
        }
    }
}

fn slope_at(f: &PiecewiseAffine, x: &Scalar) -> Scalar {
    let pieces = f.pieces();
    for i in (0..pieces.len()).rev() {
        if *x >= pieces[i].start {
            return pieces[i].slope.clone();
        }
    }
    unreachable!()
}

fn displacement_general(
    f: &PiecewiseAffine,
    _iet: &IetSpec,
    tower: &RigidityTower,
    cell_budget: usize,
) -> Result<PushforwardMeasure, CriterionError> {
    let q = tower.q;
    let j_iv = &tower.j;
    let c = &tower.displacement;
    let mut atom_map: BTreeMap<Scalar, Scalar> = BTreeMap::new();
    let mut ac_cells: Vec<(Scalar, Scalar, Scalar)> = Vec::new();
    let mut cells_used = 0usize;
    let u0 = &j_iv.lo;
    let term_val = |k: usize| -> Result<Scalar, CriterionError> {
        let tau = tower.tau(k);
        Ok(f.evaluate(&(u0 + c + &tau))? - f.evaluate(&(u0 + &tau))?)
    };
    let term_slope = |k: usize| -> Scalar {
        let tau = tower.tau(k);
        slope_at(f, &(u0 + c + &tau)) - slope_at(f, &(u0 + &tau))
    };
    // level-start value and slope, updated incrementally over j
    let mut val = Scalar::zero();
    let mut slo = Scalar::zero();
    for k in 0..q {
        val = val + term_val(k)?;
        slo = slo + term_slope(k);
    }
    for j in 0..q {
        let mut cuts: Vec<CutEvent> = Vec::new();
        for k in j..j + q {
            let tau = tower.tau(k);
            cuts_for_shift(f, j_iv, &(c + &tau), 1, &mut cuts);
            cuts_for_shift(f, j_iv, &tau, -1, &mut cuts);
        }
        cuts.sort_by(|a, b| a.pos.cmp(&b.pos));
        cells_used += cuts.len() + 1;
        if cells_used > cell_budget {
            return Err(CriterionError::RefinementExplosion {
                cells: cells_used,
                budget: cell_budget,
            });
        }
        let mut cur_lo = j_iv.lo.clone();
        let mut cur_val = val.clone();
        let mut cur_slope = slo.clone();
        let mut idx = 0usize;
        loop {
            let cur_hi = if idx < cuts.len() {
                cuts[idx].pos.clone()
            } else {
                j_iv.hi.clone()
            };
            let width = &cur_hi - &cur_lo;
            if width.is_positive() {
                if cur_slope.is_zero() {
                    let e = atom_map.entry(cur_val.clone()).or_insert_with(Scalar::zero);
                    *e = &*e + &width;
                } else {
                    let end_val = &cur_val + &cur_slope * &width;
                    let (lo_v, hi_v) = if cur_slope.is_positive() {
                        (cur_val.clone(), end_val)
                    } else {
                        (end_val, cur_val.clone())
                    };
                    ac_cells.push((lo_v, hi_v, width.clone()));
                }
            }
            if idx >= cuts.len() {
                break;
            }
            let mut val_at = &cur_val + &cur_slope * &width;
            while idx < cuts.len() && cuts[idx].pos == cur_hi {
                val_at = val_at + &cuts[idx].value_jump;
                cur_slope = &cur_slope + &cuts[idx].slope_delta;
                idx += 1;
            }
            cur_val = val_at;
            cur_lo = cur_hi;
        }
        if j + 1 < q {
            val = val - term_val(j)? + term_val(j + q)?;
            slo = slo - term_slope(j) + term_slope(j + q);
        }
    }
    let measure = PushforwardMeasure::from_parts(atom_map, ac_cells);
    normalize_and_check(measure, tower)
}

/// Exact joint pushforward of `(f^{(2q)} - 2a, f^{(q)} - a)` on `W`; atoms
/// arise on cells where both window sums are flat.
pub fn pair_distribution(
    f: &PiecewiseAffine,
    _iet: &IetSpec,
    tower: &RigidityTower,
    a: &Scalar,
    cell_budget: usize,
) -> Result<PairMeasure, CriterionError> {
    let q = tower.q;
    let j_iv = &tower.j;
    let mut atom_map: BTreeMap<(Scalar, Scalar), Scalar> = BTreeMap::new();
    let mut ac_mass = Scalar::zero();
    let mut cells_used = 0usize;
    let u0 = &j_iv.lo;
    let fval = |k: usize| -> Result<Scalar, CriterionError> {
        Ok(f.evaluate(&(u0 + tower.tau(k)))?)
    };
    let fslope = |k: usize| -> Scalar { slope_at(f, &(u0 + tower.tau(k))) };
    let mut val_q = Scalar::zero();
    let mut slo_q = Scalar::zero();
    let mut val_2q = Scalar::zero();
    let mut slo_2q = Scalar::zero();
    for k in 0..q {
        val_q = val_q + fval(k)?;
        slo_q = slo_q + fslope(k);
    }
    for k in 0..2 * q {
        val_2q = val_2q + fval(k)?;
        slo_2q = slo_2q + fslope(k);
    }
    let two = Scalar::from_integer(2);
    #[derive(Clone)]
    struct PairCut {
        dq_slope: Scalar,
        dq_jump: Scalar,
        d2q_slope: Scalar,
        d2q_jump: Scalar,
    }
    for j in 0..q {
        let mut cuts_q: Vec<CutEvent> = Vec::new();
        let mut cuts_2q: Vec<CutEvent> = Vec::new();
        for k in j..j + q {
            cuts_for_shift(f, j_iv, &tower.tau(k), 1, &mut cuts_q);
        }
        for k in j..j + 2 * q {
            cuts_for_shift(f, j_iv, &tower.tau(k), 1, &mut cuts_2q);
        }
        let mut grid: BTreeMap<Scalar, PairCut> = BTreeMap::new();
        let blank = || PairCut {
            dq_slope: Scalar::zero(),
            dq_jump: Scalar::zero(),
            d2q_slope: Scalar::zero(),
            d2q_jump: Scalar::zero(),
        };
        for cte in cuts_q {
            let e = grid.entry(cte.pos.clone()).or_insert_with(blank);
            e.dq_slope = &e.dq_slope + &cte.slope_delta;
            e.dq_jump = &e.dq_jump + &cte.value_jump;
        }
        for cte in cuts_2q {
            let e = grid.entry(cte.pos.clone()).or_insert_with(blank);
            e.d2q_slope = &e.d2q_slope + &cte.slope_delta;
            e.d2q_jump = &e.d2q_jump + &cte.value_jump;
        }
        let cuts: Vec<(Scalar, PairCut)> = grid.into_iter().collect();
        cells_used += cuts.len() + 1;
        if cells_used > cell_budget {
            return Err(CriterionError::RefinementExplosion {
                cells: cells_used,
                budget: cell_budget,
            });
        }
        let mut cur_lo = j_iv.lo.clone();
        let mut vq = val_q.clone();
        let mut sq = slo_q.clone();
        let mut v2 = val_2q.clone();
        let mut s2 = slo_2q.clone();
        let mut idx = 0usize;
        loop {
            let cur_hi = if idx < cuts.len() {
                cuts[idx].0.clone()
            } else {
                j_iv.hi.clone()
            };
            let width = &cur_hi - &cur_lo;
            if width.is_positive() {
                if sq.is_zero() && s2.is_zero() {
                    let key = (&v2 - &two * a, &vq - a);
                    let e = atom_map.entry(key).or_insert_with(Scalar::zero);
                    *e = &*e + &width;
                } else {
                    ac_mass = &ac_mass + &width;
                }
            }
            if idx >= cuts.len() {
                break;
            }
            vq = &vq + &sq * &width + &cuts[idx].1.dq_jump;
            sq = &sq + &cuts[idx].1.dq_slope;
            v2 = &v2 + &s2 * &width + &cuts[idx].1.d2q_jump;
            s2 = &s2 + &cuts[idx].1.d2q_slope;
            idx += 1;
            cur_lo = cur_hi;
        }
        if j + 1 < q {
            val_q = val_q - fval(j)? + fval(j + q)?;
            slo_q = slo_q - fslope(j) + fslope(j + q);
            val_2q = val_2q - fval(j)? + fval(j + 2 * q)?;
            slo_2q = slo_2q - fslope(j) + fslope(j + 2 * q);
        }
    }
    let mut mass_total = ac_mass.clone();
    for m in atom_map.values() {
        mass_total = mass_total + m;
    }
    if mass_total != tower.measure {
        return Err(CriterionError::MassMismatch(format!(
            "pair pushforward total {} differs from Leb(W) = {}",
            mass_total, tower.measure
        )));
    }
    let scale = tower.measure.clone();
    Ok(PairMeasure {
        atoms: atom_map
            .into_iter()
            .map(|(k, m)| (k, m / &scale))
            .collect(),
        ac_mass: ac_mass / &scale,
        total: Scalar::one(),
    })
}

/// Per-tower diagnostics toward the weak-limit conditions: exact measures,
/// boundary, sup displacements, centering constants and (budget permitting)
/// second moments.
#[derive(Debug, Clone, Serialize)]
pub struct WlRow {
    pub n_index: usize,
    pub q: usize,
    pub measure: Scalar,
    pub boundary_measure: Scalar,
    pub sup_disp_q: Scalar,
    pub sup_disp_2q: Scalar,
    pub a: Scalar,
    /// `∫_W |f^{(q)} - a|²`, exact, when within the cell budget.
    pub second_moment: Option<Scalar>,
    /// Pointwise bound `Var(f)² · Leb(W)`, always valid on the triple tower.
    pub second_moment_bound: Scalar,
}

#[derive(Debug, Clone, Serialize)]
pub struct WlReport {
    pub rows: Vec<WlRow>,
    pub boundary_decreasing: bool,
    pub displacement_decreasing: bool,
    pub moments_bounded: bool,
}

pub fn wl_report(
    f: &PiecewiseAffine,
    iet: &IetSpec,
    towers: &[RigidityTower],
    cell_budget: usize,
) -> Result<WlReport, CriterionError> {
    assert!(towers.len() >= 2, "trend report needs at least two towers");
    let var = f.variation();
    let mut rows = Vec::with_capacity(towers.len());
    for t in towers {
        let diag = rigidity_diagnostic(iet, t);
        let a = center_on_tower(f, &t.delta, &t.translations);
        let moment = second_moment(f, t, &a, cell_budget).ok();
        let bound = &var * &var * &t.measure;
        rows.push(WlRow {
            n_index: t.n_index,
            q: t.q,
            measure: t.measure.clone(),
            boundary_measure: diag.boundary_measure,
            sup_disp_q: diag.sup_disp_q,
            sup_disp_2q: diag.sup_disp_2q,
            a,
            second_moment: moment,
            second_moment_bound: bound,
        });
    }
    let boundary_decreasing = rows
        .windows(2)
        .all(|w| w[1].boundary_measure < w[0].boundary_measure);
    let displacement_decreasing = rows
        .windows(2)
        .all(|w| w[1].sup_disp_q < w[0].sup_disp_q);
    let moments_bounded = rows.iter().all(|r| {
        r.second_moment
            .as_ref()
            .map_or(true, |m| *m <= r.second_moment_bound)
    });
    Ok(WlReport {
        rows,
        boundary_decreasing,
        displacement_decreasing,
        moments_bounded,
    })
}

/// Exact `∫_W (f^{(q)} - a)²` by per-level refinement.
pub fn second_moment(
    f: &PiecewiseAffine,
    tower: &RigidityTower,
    a: &Scalar,
    cell_budget: usize,
) -> Result<Scalar, CriterionError> {
    let q = tower.q;
    let j_iv = &tower.j;
    let u0 = &j_iv.lo;
    let fval = |k: usize| -> Result<Scalar, CriterionError> {
        Ok(f.evaluate(&(u0 + tower.tau(k)))?)
    };
    let fslope = |k: usize| -> Scalar { slope_at(f, &(u0 + tower.tau(k))) };
    let mut val = Scalar::zero();
    let mut slo = Scalar::zero();
    for k in 0..q {
        val = val + fval(k)?;
        slo = slo + fslope(k);
    }
    let mut cells_used = 0usize;
    let mut acc = Scalar::zero();
    let third = Scalar::from_ratio(1, 3);
    for j in 0..q {
        let mut cuts: Vec<CutEvent> = Vec::new();
        for k in j..j + q {
            cuts_for_shift(f, j_iv, &tower.tau(k), 1, &mut cuts);
        }
        cuts.sort_by(|x, y| x.pos.cmp(&y.pos));
        cells_used += cuts.len() + 1;
        if cells_used > cell_budget {
            return Err(CriterionError::RefinementExplosion {
                cells: cells_used,
                budget: cell_budget,
            });
        }
        let mut cur_lo = j_iv.lo.clone();
        let mut v = &val - a;
        let mut s = slo.clone();
        let mut idx = 0usize;
        loop {
            let cur_hi = if idx < cuts.len() {
                cuts[idx].pos.clone()
            } else {
                j_iv.hi.clone()
            };
            let w = &cur_hi - &cur_lo;
            if w.is_positive() {
                // ∫₀^w (v + s t)² dt = v²w + v s w² + s² w³ / 3
                acc = acc
                    + &v * &v * &w
                    + &v * &s * &w * &w
                    + &s * &s * &w * &w * &w * &third;
            }
            if idx >= cuts.len() {
                break;
            }
            let mut v_at = &v + &s * &w;
            while idx < cuts.len() && cuts[idx].pos == cur_hi {
                v_at = v_at + &cuts[idx].value_jump;
                s = &s + &cuts[idx].slope_delta;
                idx += 1;
            }
            v = v_at;
            cur_lo = cur_hi;
        }
        if j + 1 < q {
            val = val - fval(j)? + fval(j + q)?;
            slo = slo - fslope(j) + fslope(j + q);
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "SATISFIED")]
    Satisfied,
    #[serde(rename = "FAILED_MASS")]
    FailedMass,
    #[serde(rename = "FAILED_SYMMETRY")]
    FailedSymmetry,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

/// Outcome of the non-reversibility mass/asymmetry check.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub alpha: Scalar,
    pub atoms: Vec<(Scalar, Scalar)>,
    pub c0: Scalar,
    pub nonzero_mass: Scalar,
    pub threshold: Scalar,
    pub symmetry_violations: Vec<(usize, usize)>,
    pub verdict: Verdict,
}

/// Checks the discrete criterion: total nonzero atom mass above `(1-α)/α`
/// and no pair `d_i = -d_j` among the nonzero atoms.
pub fn check_glwynik(
    xi_p: &EmpiricalMeasure,
    alpha: &Scalar,
) -> Result<CriterionReport, CriterionError> {
    if !alpha.is_positive() || *alpha > Scalar::one() {
        return Err(CriterionError::BadAlpha(alpha.to_string()));
    }
    let tol = &xi_p.cluster_tol;
    let mut c0 = Scalar::zero();
    let mut nonzero: Vec<(Scalar, Scalar)> = Vec::new();
    for (v, m) in &xi_p.atoms {
        if v.abs() <= *tol {
            c0 = &c0 + m;
        } else {
            nonzero.push((v.clone(), m.clone()));
        }
    }
    let nonzero_mass = nonzero.iter().fold(Scalar::zero(), |acc, (_, m)| acc + m);
    let threshold = (&Scalar::one() - alpha) / alpha;
    let mut symmetry_violations = Vec::new();
    for i in 0..nonzero.len() {
        for j in i + 1..nonzero.len() {
            if (&nonzero[i].0 + &nonzero[j].0).abs() <= *tol {
                symmetry_violations.push((i, j));
            }
        }
    }
    let verdict = if !symmetry_violations.is_empty() {
        Verdict::FailedSymmetry
    } else if nonzero_mass > threshold {
        Verdict::Satisfied
    } else {
        Verdict::FailedMass
    };
    Ok(CriterionReport {
        alpha: alpha.clone(),
        atoms: xi_p.atoms.clone(),
        c0,
        nonzero_mass,
        threshold,
        symmetry_violations,
        verdict,
    })
}

/// Pipeline knobs.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub epsilon: Scalar,
    pub budget: TowerBudget,
    pub reference: ReferenceChoice,
    pub cell_budget: usize,
    /// Sample count for the absolutely-continuous rigidity check.
    pub ac_samples: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            epsilon: Scalar::from_ratio(1, 5),
            budget: TowerBudget::default(),
            reference: ReferenceChoice::default(),
            cell_budget: 2_000_000,
            ac_samples: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PipelineCase {
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "constant")]
    Constant,
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerSummary {
    pub n_index: usize,
    pub q: usize,
    pub measure: Scalar,
    pub displacement: Scalar,
    pub certificates: Vec<Certificate>,
    /// Atoms of the exact displacement distribution on this tower (the
    /// linear part in case 1, the roof itself in case 2).
    pub xi_atoms: Vec<(Scalar, Scalar)>,
    /// Total window mass, case 2 only.
    pub window_mass: Option<Scalar>,
    /// Sampled sup of the AC correction displacement, when a correction exists.
    pub ac_sup: Option<Scalar>,
    /// Non-atomic mass of the full-roof displacement distribution, when the
    /// refinement fits the budget.
    pub full_roof_ac_mass: Option<Scalar>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub case: PipelineCase,
    pub s_f: Scalar,
    pub towers: Vec<TowerSummary>,
    pub deepest_q: Option<usize>,
    pub alpha: Option<Scalar>,
    pub xi_p: Option<EmpiricalMeasure>,
    pub criterion: Option<CriterionReport>,
    pub verdict: Verdict,
    /// Reasons for an inconclusive verdict, and standing caveats.
    pub notes: Vec<String>,
    /// AC sup values strictly decay along towers (case 1 with a correction).
    pub ac_decay_ok: Option<bool>,
}

fn inconclusive(case: PipelineCase, s_f: Scalar, notes: Vec<String>) -> PipelineReport {
    PipelineReport {
        case,
        s_f,
        towers: Vec::new(),
        deepest_q: None,
        alpha: None,
        xi_p: None,
        criterion: None,
        verdict: Verdict::Inconclusive,
        notes,
        ac_decay_ok: None,
    }
}

/// End-to-end run: decides the case from `S(f)`, builds towers, computes the
/// exact displacement distribution and checks the criterion at the deepest
/// admissible tower.
pub fn theorem_pipeline(
    iet: &IetSpec,
    roof: &PiecewiseRoof,
    params: &PipelineParams,
) -> Result<PipelineReport, CriterionError> {
    let iet = if iet.total() == &Scalar::one() {
        iet.clone()
    } else {
        iet.normalized()
    };
    let f = roof.function();
    let s_f = f.sum_of_jumps();
    let mut notes = vec![
        "alpha is the exact tower measure at the deepest depth, not a limit".into(),
        "minimality of the exchange is not certified; endpoint-orbit coincidences are \
         excluded only along the finitely many steps inspected"
            .into(),
    ];
    if !s_f.is_zero() {
        // Case 1: nonzero slope sum, roof continuous over exchanged intervals.
        if !f.continuity_over_exchanged(&iet) {
            return Err(CriterionError::JumpOffExchange);
        }
        let (f_pl, f_ac) = f.decompose();
        let ac_is_zero = f_ac
            .pieces()
            .iter()
            .all(|p| p.left_value.is_zero() && p.slope.is_zero());
        let towers =
            match build_w_linear(&iet, &params.epsilon, params.budget, &params.reference) {
                Ok(ts) => ts,
                Err(TowerError::BudgetExhausted { max_steps }) => {
                    notes.push(format!(
                        "no recurrence hit within {max_steps} induction steps"
                    ));
                    return Ok(inconclusive(PipelineCase::Linear, s_f, notes));
                }
                Err(e) => return Err(e.into()),
            };
        let mut summaries = Vec::new();
        let mut ac_sups: Vec<Scalar> = Vec::new();
        let mut xi_deepest: Option<EmpiricalMeasure> = None;
        for t in &towers {
            let dist = displacement_distribution(&f_pl, &iet, t, params.cell_budget)?;
            let xi = dist.to_empirical(Scalar::zero())?;
            if xi.atoms.len() != 1 {
                return Err(CriterionError::MassMismatch(format!(
                    "linear-part displacement is not a single atom at depth {}",
                    t.n_index
                )));
            }
            let ac_sup = if ac_is_zero {
                None
            } else {
                let sup = ac_rigidity_check(&f_ac, &iet, t, params.ac_samples)?;
                ac_sups.push(sup.clone());
                Some(sup)
            };
            let full_roof_ac_mass = if ac_is_zero {
                Some(Scalar::zero())
            } else {
                displacement_distribution(f, &iet, t, params.cell_budget)
                    .ok()
                    .map(|d| d.ac_mass)
            };
            summaries.push(TowerSummary {
                n_index: t.n_index,
                q: t.q,
                measure: t.measure.clone(),
                displacement: t.displacement.clone(),
                certificates: t.certificates.clone(),
                xi_atoms: xi.atoms.clone(),
                window_mass: None,
                ac_sup,
                full_roof_ac_mass,
            });
            xi_deepest = Some(xi);
        }
        let deepest = towers.last().expect("nonempty");
        let alpha = deepest.measure.clone();
        let xi_p = xi_deepest.expect("nonempty");
        let criterion = check_glwynik(&xi_p, &alpha)?;
        let ac_decay_ok = if ac_sups.len() >= 2 {
            Some(ac_sups.windows(2).all(|w| w[1] < w[0]))
        } else {
            None
        };
        let verdict = criterion.verdict;
        Ok(PipelineReport {
            case: PipelineCase::Linear,
            s_f,
            towers: summaries,
            deepest_q: Some(deepest.q),
            alpha: Some(alpha),
            xi_p: Some(xi_p),
            criterion: Some(criterion),
            verdict,
            notes,
            ac_decay_ok,
        })
    } else {
        // Case 2: zero slope sum; only piecewise-constant roofs are handled.
        if !f.is_piecewise_constant() {
            return Err(CriterionError::CaseUnsupported(
                "S(f) = 0 with a non-constant absolutely continuous part".into(),
            ));
        }
        let jumps = f.jumps();
        let r = jumps.len();
        if r < 3 {
            return Err(CriterionError::Tower(TowerError::InvalidR(r)));
        }
        for i in 0..r {
            for j in i + 1..r {
                if jumps[i].1 == -jumps[j].1.clone() {
                    return Err(CriterionError::OppositeJumps(
                        jumps[i].1.to_string(),
                        jumps[j].1.to_string(),
                    ));
                }
            }
        }
        notes.push(
            "discontinuity capture is finite-depth evidence, not an almost-everywhere \
             statement"
                .into(),
        );
        let towers =
            match build_w_constant(&iet, &params.epsilon, r, params.budget, &params.reference) {
                Ok(ts) => ts,
                Err(TowerError::BudgetExhausted { max_steps }) => {
                    notes.push(format!(
                        "no recurrence hit within {max_steps} induction steps"
                    ));
                    return Ok(inconclusive(PipelineCase::Constant, s_f, notes));
                }
                Err(e) => return Err(e.into()),
            };
        let betas: Vec<Scalar> = jumps.iter().map(|(b, _)| b.clone()).collect();
        let mut summaries = Vec::new();
        let mut deepest: Option<(usize, EmpiricalMeasure, Scalar)> = None;
        for t in &towers {
            let win = match discontinuity_windows(&iet, t, &betas) {
                Ok(w) => w,
                Err(TowerError::NotCaptured { l }) => {
                    notes.push(format!(
                        "depth {}: discontinuity {l} not captured by its subtower",
                        t.n_index
                    ));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let dist = displacement_distribution(f, &iet, t, params.cell_budget)?;
            let xi = dist.to_empirical(Scalar::zero())?;
            // oracle: atom mass at each jump value equals the exact window
            // mass (summed over discontinuities sharing a value)
            let mut expected: BTreeMap<Scalar, Scalar> = BTreeMap::new();
            for ((_, d), w) in jumps.iter().zip(win.windows.iter()) {
                let e = expected.entry(d.clone()).or_insert_with(Scalar::zero);
                *e = &*e + &(w.measure() / &t.measure);
            }
            for (value, want) in &expected {
                let got = xi.mass_at(value);
                if got != *want {
                    return Err(CriterionError::MassMismatch(format!(
                        "atom at {value}: distribution mass {got} vs window mass {want}"
                    )));
                }
            }
            for (v, _) in &xi.atoms {
                if !v.is_zero() && !expected.contains_key(v) {
                    return Err(CriterionError::MassMismatch(format!(
                        "unexpected displacement atom at {v}"
                    )));
                }
            }
            summaries.push(TowerSummary {
                n_index: t.n_index,
                q: t.q,
                measure: t.measure.clone(),
                displacement: t.displacement.clone(),
                certificates: t.certificates.clone(),
                xi_atoms: xi.atoms.clone(),
                window_mass: Some(win.total_mass.clone()),
                ac_sup: None,
                full_roof_ac_mass: Some(Scalar::zero()),
            });
            deepest = Some((t.q, xi, t.measure.clone()));
        }
        let Some((deepest_q, xi_p, alpha)) = deepest else {
            notes.push("no tower captured every discontinuity".into());
            let mut rep = inconclusive(PipelineCase::Constant, s_f, notes);
            rep.towers = summaries;
            return Ok(rep);
        };
        let criterion = check_glwynik(&xi_p, &alpha)?;
        let verdict = criterion.verdict;
        Ok(PipelineReport {
            case: PipelineCase::Constant,
            s_f,
            towers: summaries,
            deepest_q: Some(deepest_q),
            alpha: Some(alpha),
            xi_p: Some(xi_p),
            criterion: Some(criterion),
            verdict,
            notes,
            ac_decay_ok: None,
        })
    }
}

/// Direct-evaluation oracle for the displacement at a point of `W`.
pub fn displacement_at(
    f: &PiecewiseAffine,
    iet: &IetSpec,
    tower: &RigidityTower,
    x: &Scalar,
) -> Result<Scalar, CriterionError> {
    let q = tower.q as i64;
    let tqx = iet.apply(x, q)?;
    Ok(birkhoff_sum(f, iet, q, &tqx)? - birkhoff_sum(f, iet, q, x)?)
}
