//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see the lines
//! for passing criteria as well).
//!
//! Criteria 4, 8 and 9 name the golden-mean rotation as their input. That
//! input provably admits no rigidity towers of the required shape (its
//! normalized induction orbit is 2-periodic and never approaches the search
//! region; see the library documentation of `presets`), so those three tests
//! run the literal input, report the failure honestly, and are accompanied
//! by full-strength companion demonstrations on golden-field inputs that do
//! reach the target region (`criterion_04_companion_*` etc.), which pass.

use ietflow::criterion::{
    check_glwynik, displacement_distribution, theorem_pipeline, EmpiricalMeasure, PipelineParams,
    Verdict,
};
use ietflow::iet::{golden_iet, is_irreducible, IetSpec, Permutation};
use ietflow::interval::Interval;
use ietflow::joinings::{
    exact_rect_measure, flow, joining_convergence_check, sample_u64, sample_unit,
    triple_correlation, FlowPoint, FlowRect, RectTriple,
};
use ietflow::presets;
use ietflow::rauzy::induct_partial;
use ietflow::roof::{
    birkhoff_sum, center_on_tower, step_function, Piece, PiecewiseAffine, PiecewiseRoof,
};
use ietflow::scalar::total;
use ietflow::towers::{
    ac_rigidity_check, build_w_constant, build_w_linear, tower_decomposition, RigidityKind,
    RigidityTower, TowerError,
};
use ietflow::Scalar;

fn line(n: u32, passed: bool, detail: &str) {
    println!(
        "CRITERION {n:2}: {} - {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
}

/// Deterministic corpus of irreducible exchanges with rational lengths whose
/// denominators stay within 32 bits.
fn rational_corpus(count: usize, seed: u64) -> Vec<(Permutation, Vec<Scalar>)> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        i += 1;
        let d = 2 + (sample_u64(seed, i, 0) % 4) as usize; // 2..=5
        let mut images: Vec<usize> = (1..=d).collect();
        for k in (1..d).rev() {
            let j = (sample_u64(seed, i, 10 + k as u64) % (k as u64 + 1)) as usize;
            images.swap(k, j);
        }
        let pi = match Permutation::from_one_based(&images) {
            Ok(p) => p,
            Err(_) => continue,
        };
        if !is_irreducible(&pi) {
            continue;
        }
        let den = 1_000_003u64 + (sample_u64(seed, i, 1) % 1_000_000);
        let lambda: Vec<Scalar> = (0..d)
            .map(|k| {
                let num = 1 + sample_u64(seed, i, 20 + k as u64) % (den / 2);
                Scalar::from_ratio(num as i64, den as i64)
            })
            .collect();
        out.push((pi, lambda));
    }
    out
}

#[test]
fn criterion_01_rauzy_invariants() {
    let start = std::time::Instant::now();
    let corpus = rational_corpus(100, 0xC0FFEE);
    for (pi, lambda) in &corpus {
        let trace = induct_partial(pi, lambda, 12).expect("partial induction is total");
        assert!(trace.verify(lambda), "A^n λ^n = λ, det = 1, entries >= 0");
        // Σ_j s_j λ_j^n = |λ| with the label pairing
        let sums = trace.cumulative.column_sums();
        let mut acc = Scalar::zero();
        for (j, s) in sums.iter().enumerate() {
            let s: i64 = s.to_string().parse().expect("small height");
            acc = acc + Scalar::from_integer(s) * &trace.lambda_n[j];
        }
        assert_eq!(acc, total(lambda.iter()));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "runtime bound: {elapsed:?}");
    line(
        1,
        true,
        &format!("100 exchanges, 12 steps or first tie, exact, {elapsed:?}"),
    );
}

#[test]
fn criterion_02_tower_partition_exactness() {
    let corpus = rational_corpus(100, 0xC0FFEE);
    for (pi, lambda) in &corpus {
        let tot = total(lambda.iter());
        let norm: Vec<Scalar> = lambda.iter().map(|l| l / &tot).collect();
        let iet = IetSpec::new(pi.clone(), norm).expect("corpus is irreducible");
        let trace = induct_partial(pi, iet.lengths(), 12).expect("total");
        // tower_decomposition verifies level containment and the exact tiling
        let towers = tower_decomposition(&iet, &trace).expect("exact partition");
        // independent re-check of the tiling with zero tolerance
        let mut levels: Vec<Interval> = towers.iter().flat_map(|t| t.levels()).collect();
        levels.sort_by(|a, b| a.lo.cmp(&b.lo));
        let mut edge = Scalar::zero();
        for l in &levels {
            assert_eq!(l.lo, edge, "gap or overlap at {}", l.lo);
            edge = l.hi.clone();
        }
        assert_eq!(&edge, iet.total());
    }
    line(2, true, "100 decompositions tile exactly, zero defect");
}

fn random_roof(seed: u64, idx: u64) -> PiecewiseAffine {
    let n_pieces = 1 + (sample_u64(seed, idx, 0) % 3) as usize;
    let mut starts: Vec<Scalar> = (0..n_pieces.saturating_sub(1))
        .map(|k| {
            let v = 1 + sample_u64(seed, idx, 1 + k as u64) % 997;
            Scalar::from_ratio(v as i64, 998)
        })
        .collect();
    starts.sort();
    starts.dedup();
    let mut pieces = vec![Piece {
        start: Scalar::zero(),
        left_value: Scalar::from_ratio(
            (1 + sample_u64(seed, idx, 50) % 40) as i64,
            10,
        ),
        slope: Scalar::from_ratio((sample_u64(seed, idx, 51) % 9) as i64 - 4, 3),
    }];
    for (k, s) in starts.into_iter().enumerate() {
        pieces.push(Piece {
            start: s,
            left_value: Scalar::from_ratio(
                (1 + sample_u64(seed, idx, 60 + k as u64) % 40) as i64,
                10,
            ),
            slope: Scalar::from_ratio((sample_u64(seed, idx, 70 + k as u64) % 9) as i64 - 4, 3),
        });
    }
    let f = PiecewiseAffine::new(pieces).expect("sorted pieces");
    // lift to make it strictly positive
    let inf = f.infimum();
    let lift = if inf <= Scalar::zero() {
        &Scalar::one() - &inf
    } else {
        Scalar::zero()
    };
    let lifted: Vec<Piece> = f
        .pieces()
        .iter()
        .map(|p| Piece {
            start: p.start.clone(),
            left_value: &p.left_value + &lift,
            slope: p.slope.clone(),
        })
        .collect();
    PiecewiseAffine::new(lifted).unwrap()
}

#[test]
fn criterion_03_tower_centering_bounds() {
    let start = std::time::Instant::now();
    // towers with nonempty triple intersections from the demonstration inputs
    let p1 = presets::imbalanced_two_exchange();
    let towers1 = build_w_linear(&p1.iet, &p1.epsilon, p1.budget, &p1.reference).unwrap();
    let p2 = presets::periodic_imbalanced_two_exchange();
    let shallow = ietflow::towers::TowerBudget {
        max_hits: 2,
        ..p2.budget
    };
    let towers2 = build_w_linear(&p2.iet, &p2.epsilon, shallow, &p2.reference).unwrap();
    let systems: Vec<(&IetSpec, &RigidityTower)> = vec![
        (&p1.iet, &towers1[0]),
        (&p2.iet, &towers2[0]),
        (&p1.iet, &towers1[0]),
        (&p2.iet, &towers2[1]),
    ];
    for roof_idx in 0..20u64 {
        let f = random_roof(0xBEEF, roof_idx);
        let var = f.variation();
        let two_var = Scalar::from_integer(2) * &var;
        let (iet, tower) = systems[(roof_idx % systems.len() as u64) as usize];
        let a = center_on_tower(&f, &tower.delta, &tower.translations);
        let two_a = Scalar::from_integer(2) * &a;
        let q = tower.q as i64;
        for s in 0..100u64 {
            let level = (sample_u64(1, roof_idx, s) % tower.q as u64) as usize;
            let frac = ietflow::joinings::sample_unit_bits(2, roof_idx, s, 16);
            let x = &tower.j.lo + tower.j.length() * frac + &tower.translations[level];
            let fq = birkhoff_sum(&f, iet, q, &x).unwrap();
            assert!((&fq - &a).abs() <= var, "q-bound at sample {s}");
            let f2q = birkhoff_sum(&f, iet, 2 * q, &x).unwrap();
            assert!((&f2q - &two_a).abs() <= two_var, "2q-bound at sample {s}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "runtime bound: {elapsed:?}");
    line(
        3,
        true,
        &format!("20 roofs x 100 points, |f^(q)-a| <= Var exactly, {elapsed:?}"),
    );
}

/// Shared body of the case-1 end-to-end clauses, applied to a concrete input.
fn case1_clauses(
    input: &presets::PresetInput,
    need_towers: usize,
) -> Result<(Scalar, usize), String> {
    let eps = &input.epsilon;
    if !(&Scalar::one() - eps > Scalar::from_ratio(1, 2)) {
        return Err("1 - epsilon must exceed 1/2".into());
    }
    let towers = build_w_linear(&input.iet, eps, input.budget, &input.reference)
        .map_err(|e| format!("tower construction: {e}"))?;
    if towers.len() < need_towers {
        return Err(format!(
            "expected >= {need_towers} towers, got {}",
            towers.len()
        ));
    }
    for t in &towers {
        if !(t.measure.clone() > &Scalar::one() - eps) {
            return Err(format!("Leb(W) = {} is not > 1 - eps", t.measure));
        }
        // displacement constant on W: endpoint check on every level (sampled
        // beyond 1500 levels, where the per-level certificates already prove
        // pointwise translation)
        let stride = if t.q <= 1500 { 1 } else { t.q / 8 };
        for i in (0..t.q).step_by(stride) {
            let p = t.w_level(i).lo;
            let moved = input.iet.apply(&p, t.q as i64).map_err(|e| e.to_string())?;
            if moved != &p + &t.displacement {
                return Err(format!("displacement not constant at level {i}"));
            }
        }
    }
    // ξ⋆P from the roof x+1 (slope 1): single atom at 1·γ_n, mass 1
    let f = PiecewiseAffine::affine(Scalar::one(), Scalar::one());
    let deepest = towers.last().unwrap();
    let dist = displacement_distribution(&f, &input.iet, deepest, 1 << 22)
        .map_err(|e| e.to_string())?;
    let gamma = match &deepest.kind {
        RigidityKind::Linear { gamma } => gamma.clone(),
        _ => unreachable!(),
    };
    if dist.atoms != vec![(gamma.clone(), Scalar::one())] || !dist.ac_mass.is_zero() {
        return Err("displacement distribution is not the single atom at gamma".into());
    }
    let xi = EmpiricalMeasure::new(dist.atoms, Scalar::zero());
    let report = check_glwynik(&xi, &deepest.measure).map_err(|e| e.to_string())?;
    if report.verdict != Verdict::Satisfied {
        return Err(format!("verdict {:?}", report.verdict));
    }
    Ok((deepest.measure.clone(), towers.len()))
}

#[test]
fn criterion_04_case1_golden_end_to_end() {
    let start = std::time::Instant::now();
    let golden = presets::PresetInput {
        iet: golden_iet(),
        epsilon: Scalar::from_ratio(45, 100),
        budget: ietflow::towers::TowerBudget {
            max_steps: 256,
            max_hits: 2,
            max_height: 1 << 22,
        },
        reference: ietflow::towers::ReferenceChoice::default(),
    };
    let result = case1_clauses(&golden, 2);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "runtime bound: {elapsed:?}");
    match result {
        Ok((alpha, n)) => {
            line(4, true, &format!("golden: {n} towers, alpha = {alpha}"));
        }
        Err(msg) => {
            line(
                4,
                false,
                &format!(
                    "golden rotation: {msg}; its 2-periodic orbit never enters the \
                     imbalanced region and admits no triple-intersection towers \
                     (see the companion demonstration, which passes all clauses \
                     on a golden-field input)"
                ),
            );
            panic!("criterion 4 is unattainable for the literal golden rotation: {msg}");
        }
    }
}

#[test]
fn criterion_04_companion_case1_quadratic_field_demo() {
    let start = std::time::Instant::now();
    let input = presets::periodic_imbalanced_two_exchange();
    // all clauses of criterion 4, at full strength, on an input in Q(√293)
    // built from the golden positive-return matrix; epsilon satisfies
    // 1 - eps = 11/20 > 1/2
    let (alpha, n) = case1_clauses(&input, 2).expect("companion must pass");
    assert!(alpha > Scalar::from_ratio(1, 2));
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "runtime bound: {elapsed:?}");
    line(
        4,
        true,
        &format!("companion demo: {n} towers, alpha = {:.4}, {elapsed:?}", alpha.to_f64()),
    );
}

#[test]
fn criterion_05_case2_end_to_end() {
    let start = std::time::Instant::now();
    let r = 3usize;
    let p = presets::near_half_four_exchange(r);
    let towers = build_w_constant(&p.iet, &p.epsilon, r, p.budget, &p.reference).unwrap();
    let deepest = towers.last().unwrap();
    let bases = match &deepest.kind {
        RigidityKind::Constant { subtower_bases, .. } => subtower_bases.clone(),
        _ => unreachable!(),
    };
    // β_l placed inside W_n^l (level-0 midpoints keep them sorted)
    let betas: Vec<Scalar> = bases.iter().map(|b| b.midpoint()).collect();
    let jump_values = [
        Scalar::one(),
        Scalar::from_ratio(1, 2),
        Scalar::from_ratio(1, 3),
    ];
    let jumps: Vec<(Scalar, Scalar)> = betas
        .iter()
        .cloned()
        .zip(jump_values.iter().cloned())
        .collect();
    let roof =
        PiecewiseRoof::new(step_function(Scalar::from_integer(2), &jumps).unwrap()).unwrap();
    let params = PipelineParams {
        epsilon: p.epsilon.clone(),
        budget: p.budget,
        reference: p.reference.clone(),
        ..Default::default()
    };
    let rep = theorem_pipeline(&p.iet, &roof, &params).unwrap();
    assert_eq!(rep.verdict, Verdict::Satisfied, "notes: {:?}", rep.notes);
    let xi = rep.xi_p.as_ref().unwrap();
    for (v, _) in &xi.atoms {
        assert!(
            v.is_zero() || jump_values.contains(v),
            "support must be within {{0, 1, 1/2, 1/3}}, got {v}"
        );
    }
    // atom masses match the exact window measures (also cross-checked inside
    // the pipeline); the nonzero mass beats the threshold at the deepest depth
    let crit = rep.criterion.as_ref().unwrap();
    assert!(crit.nonzero_mass > crit.threshold);
    let summary = rep.towers.last().unwrap();
    let alpha = rep.alpha.clone().unwrap();
    assert_eq!(
        crit.nonzero_mass,
        summary.window_mass.clone().unwrap() / &alpha
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "runtime bound: {elapsed:?}");
    line(
        5,
        true,
        &format!(
            "d=4 double tower q = {}, alpha = {:.4}, nonzero mass {:.4} > threshold {:.4}, {elapsed:?}",
            summary.q,
            alpha.to_f64(),
            crit.nonzero_mass.to_f64(),
            crit.threshold.to_f64()
        ),
    );
}

#[test]
fn criterion_06_negative_controls() {
    // opposite jumps rejected end to end
    let p = presets::imbalanced_two_exchange();
    let f = step_function(
        Scalar::from_integer(2),
        &[
            (Scalar::from_ratio(1, 5), Scalar::one()),
            (Scalar::from_ratio(2, 5), Scalar::from_integer(-1)),
            (Scalar::from_ratio(3, 5), Scalar::from_ratio(1, 3)),
        ],
    )
    .unwrap();
    let roof = PiecewiseRoof::new(f).unwrap();
    let params = PipelineParams {
        epsilon: p.epsilon.clone(),
        budget: p.budget,
        ..Default::default()
    };
    assert!(matches!(
        theorem_pipeline(&p.iet, &roof, &params).unwrap_err(),
        ietflow::criterion::CriterionError::OppositeJumps(_, _)
    ));
    // atoms {(0,1)}: FAILED_MASS for every alpha < 1
    let zero_only = EmpiricalMeasure::new(vec![(Scalar::zero(), Scalar::one())], Scalar::zero());
    let rep = check_glwynik(&zero_only, &Scalar::from_ratio(9, 10)).unwrap();
    assert_eq!(rep.verdict, Verdict::FailedMass);
    // symmetric imported atoms: FAILED_SYMMETRY
    let symm = EmpiricalMeasure::new(
        vec![
            (Scalar::from_ratio(1, 2), Scalar::from_ratio(1, 2)),
            (Scalar::from_ratio(-1, 2), Scalar::from_ratio(1, 2)),
        ],
        Scalar::zero(),
    );
    let rep = check_glwynik(&symm, &Scalar::from_ratio(9, 10)).unwrap();
    assert_eq!(rep.verdict, Verdict::FailedSymmetry);
    line(6, true, "opposite jumps rejected; FAILED_MASS; FAILED_SYMMETRY");
}

#[test]
fn criterion_07_cocycle_and_flow_identities() {
    let iet = golden_iet();
    let f = PiecewiseAffine::new(vec![
        Piece {
            start: Scalar::zero(),
            left_value: Scalar::one(),
            slope: Scalar::from_integer(2),
        },
        Piece {
            start: Scalar::from_ratio(1, 2),
            left_value: Scalar::from_integer(2),
            slope: Scalar::from_integer(-1),
        },
    ])
    .unwrap();
    let roof = PiecewiseRoof::new(f.clone()).unwrap();
    let seed = 0xAB5D_1CE5_u64;
    for i in 0..1000u64 {
        // cocycle identity with zero tolerance
        let x = sample_unit(seed, i, 0);
        let m = (sample_u64(seed, i, 1) % 41) as i64 - 20;
        let n = (sample_u64(seed, i, 2) % 41) as i64 - 20;
        let tm = iet.apply(&x, m).unwrap();
        let lhs = birkhoff_sum(&f, &iet, m + n, &x).unwrap();
        let rhs = birkhoff_sum(&f, &iet, m, &x).unwrap() + birkhoff_sum(&f, &iet, n, &tm).unwrap();
        assert_eq!(lhs, rhs);
    }
    for i in 0..1000u64 {
        // flow group law with zero tolerance
        let x = sample_unit(seed, 7_000 + i, 0);
        let fx = roof.evaluate(&x).unwrap();
        let r = sample_unit(seed, 7_000 + i, 1) * &fx;
        let p = FlowPoint { x, r };
        let s = &sample_unit(seed, 7_000 + i, 2) * Scalar::from_integer(10)
            - Scalar::from_integer(5);
        let t = &sample_unit(seed, 7_000 + i, 3) * Scalar::from_integer(10)
            - Scalar::from_integer(5);
        let two_step = flow(&roof, &iet, &flow(&roof, &iet, &p, &s).unwrap(), &t).unwrap();
        let one_step = flow(&roof, &iet, &p, &(&s + &t)).unwrap();
        assert_eq!(two_step, one_step);
    }
    line(7, true, "1000 cocycle + 1000 group-law identities, exact");
}

#[test]
fn criterion_08_ac_decay_on_golden_towers() {
    // f_ac of the slopes-(2,-1) roof
    let f = PiecewiseAffine::new(vec![
        Piece {
            start: Scalar::zero(),
            left_value: Scalar::one(),
            slope: Scalar::from_integer(2),
        },
        Piece {
            start: Scalar::from_ratio(1, 2),
            left_value: Scalar::from_integer(2),
            slope: Scalar::from_integer(-1),
        },
    ])
    .unwrap();
    let (_pl, f_ac) = f.decompose();
    let golden = golden_iet();
    let result = build_w_linear(
        &golden,
        &Scalar::from_ratio(45, 100),
        ietflow::towers::TowerBudget {
            max_steps: 256,
            max_hits: 3,
            max_height: 1 << 22,
        },
        &ietflow::towers::ReferenceChoice::default(),
    );
    match result {
        Ok(towers) if towers.len() >= 3 => {
            let sups: Vec<Scalar> = towers
                .iter()
                .map(|t| ac_rigidity_check(&f_ac, &golden, t, 32).unwrap())
                .collect();
            let ok = sups.windows(2).all(|w| w[1] < w[0]);
            line(8, ok, &format!("golden towers, sups = {sups:?}"));
            assert!(ok);
        }
        Ok(towers) => {
            line(
                8,
                false,
                &format!(
                    "golden rotation yields only {} tower(s); three successive \
                     depths are unattainable (companion demonstration passes)",
                    towers.len()
                ),
            );
            panic!("criterion 8 is unattainable for the literal golden rotation");
        }
        Err(TowerError::BudgetExhausted { .. }) => {
            line(
                8,
                false,
                "golden rotation admits no rigidity towers at all (2-periodic \
                 orbit, empty triple intersections); the companion demonstration \
                 exercises the decay on a golden-field input and passes",
            );
            panic!("criterion 8 is unattainable for the literal golden rotation");
        }
        Err(e) => panic!("unexpected error: {e}"),
    }
}

#[test]
fn criterion_08_companion_ac_decay_demo() {
    let start = std::time::Instant::now();
    let f = PiecewiseAffine::new(vec![
        Piece {
            start: Scalar::zero(),
            left_value: Scalar::one(),
            slope: Scalar::from_integer(2),
        },
        Piece {
            start: Scalar::from_ratio(1, 2),
            left_value: Scalar::from_integer(2),
            slope: Scalar::from_integer(-1),
        },
    ])
    .unwrap();
    let (_pl, f_ac) = f.decompose();
    assert!(f_ac.sum_of_jumps().is_zero());
    let p = presets::periodic_imbalanced_two_exchange();
    let towers = build_w_linear(&p.iet, &p.epsilon, p.budget, &p.reference).unwrap();
    assert!(towers.len() >= 3);
    let sups: Vec<Scalar> = towers
        .iter()
        .map(|t| ac_rigidity_check(&f_ac, &p.iet, t, 8).unwrap())
        .collect();
    for w in sups.windows(2) {
        assert!(
            w[1] < w[0],
            "sampled sup must strictly decrease: {:?}",
            sups.iter().map(|s| s.to_f64()).collect::<Vec<_>>()
        );
    }
    let elapsed = start.elapsed();
    line(
        8,
        true,
        &format!(
            "companion demo: sups {:?} strictly decreasing across 3 depths, {elapsed:?}",
            sups.iter().map(|s| s.to_f64()).collect::<Vec<_>>()
        ),
    );
}

fn six_rects() -> Vec<RectTriple> {
    let mk = |b0: i64, b1: i64, h0: i64, h1: i64| FlowRect {
        base: Interval::new(Scalar::from_ratio(b0, 10), Scalar::from_ratio(b1, 10)),
        band: Interval::new(Scalar::from_ratio(h0, 10), Scalar::from_ratio(h1, 10)),
    };
    let rects = [
        mk(0, 4, 0, 8),
        mk(2, 7, 1, 9),
        mk(5, 9, 0, 5),
        mk(1, 9, 3, 11),
        mk(0, 9, 0, 14),
        mk(3, 5, 2, 6),
    ];
    rects
        .iter()
        .enumerate()
        .map(|(i, r)| RectTriple {
            id: format!("r{i}"),
            a: r.clone(),
            b: r.clone(),
            c: r.clone(),
        })
        .collect()
}

#[test]
fn criterion_09_joining_witness_on_golden() {
    // the golden case-1 run produces no towers, so there are no depths to
    // compare; the companion demonstration runs the trend test for real
    let golden = golden_iet();
    let result = build_w_linear(
        &golden,
        &Scalar::from_ratio(45, 100),
        ietflow::towers::TowerBudget {
            max_steps: 256,
            max_hits: 2,
            max_height: 1 << 22,
        },
        &ietflow::towers::ReferenceChoice::default(),
    );
    match result {
        Ok(towers) if towers.len() >= 2 => {
            line(9, true, &format!("golden produced {} towers", towers.len()));
        }
        _ => {
            line(
                9,
                false,
                "golden case-1 run yields no rigidity towers, so the two-depth \
                 discrepancy comparison has no inputs; the companion demonstration \
                 runs it on a golden-field input and passes",
            );
            panic!("criterion 9 is unattainable for the literal golden rotation");
        }
    }
}

#[test]
fn criterion_09_companion_joining_witness_demo() {
    let start = std::time::Instant::now();
    let p = presets::periodic_imbalanced_two_exchange();
    let towers = build_w_linear(&p.iet, &p.epsilon, p.budget, &p.reference).unwrap();
    let f = PiecewiseRoof::new(PiecewiseAffine::affine(Scalar::one(), Scalar::one())).unwrap();
    let depths = &towers[0..2];
    let a_n: Vec<Scalar> = depths
        .iter()
        .map(|t| center_on_tower(f.function(), &t.delta, &t.translations))
        .collect();
    let rects = six_rects();
    let rows =
        joining_convergence_check(&f, &p.iet, depths, &a_n, &rects, 10_000, 2024).unwrap();
    assert_eq!(rows.len(), 12);
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r.depth == depths[1].n_index && r.flag != "pass")
        .map(|r| r.rect_id.as_str())
        .collect();
    assert!(
        failed.is_empty(),
        "discrepancy must decrease beyond 3 sigma for every rectangle, failed: {failed:?}"
    );
    let elapsed = start.elapsed();
    line(
        9,
        true,
        &format!(
            "companion demo: 6 rectangles, discrepancy drop beyond 3 sigma at depth 2, {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_10_mc_calibration() {
    let start = std::time::Instant::now();
    let iet = golden_iet();
    let f = PiecewiseRoof::new(PiecewiseAffine::affine(Scalar::one(), Scalar::one())).unwrap();
    let rect = FlowRect {
        base: Interval::new(Scalar::from_ratio(1, 10), Scalar::from_ratio(7, 10)),
        band: Interval::new(Scalar::from_ratio(1, 10), Scalar::from_ratio(6, 5)),
    };
    let exact = exact_rect_measure(&f, &rect).unwrap().to_f64();
    let mut within = 0;
    for seed in 0..100u64 {
        let est = triple_correlation(
            &f,
            &iet,
            &rect,
            &rect,
            &rect,
            &Scalar::zero(),
            &Scalar::zero(),
            4_000,
            seed,
        )
        .unwrap();
        if (est.value.to_f64() - exact).abs() <= 3.0 * est.stderr {
            within += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(within >= 95, "only {within}/100 seeds within 3 sigma");
    line(
        10,
        true,
        &format!("{within}/100 seeds within 3 sigma of the exact measure, {elapsed:?}"),
    );
}
