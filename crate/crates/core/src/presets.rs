//! Canonical demonstration systems.
//!
//! The rigidity-tower constructions only fire when the induction orbit of
//! the input visits specific regions of the length simplex. Quadratic-field
//! inputs have eventually periodic orbits, so visits must be arranged by
//! construction; the presets here do exactly that and are used by the test
//! suite, the acceptance harness and the CLI examples.

use crate::iet::{exchange_two, golden_lengths, IetSpec, Permutation};
use crate::rauzy::{balance_ratio, find_positive_return, induct};
use crate::scalar::{total, Scalar};
use crate::towers::{ReferenceChoice, TowerBudget};

/// A prepared input for a tower construction: the exchange, a suggested
/// accuracy, a search budget, and the reference used to derive the
/// positive-return matrix.
#[derive(Debug, Clone)]
pub struct PresetInput {
    pub iet: IetSpec,
    pub epsilon: Scalar,
    pub budget: TowerBudget,
    pub reference: ReferenceChoice,
}

/// A two-interval exchange in the golden field whose orbit visits the
/// imbalanced region once: `λ = B²μ` with `B` the golden positive-return
/// matrix and `μ = (1-x, x)` for a small irrational `x`. One tall tower.
pub fn imbalanced_two_exchange() -> PresetInput {
    let b2 = induct(&exchange_two(), &golden_lengths(), 2)
        .unwrap()
        .cumulative;
    let x = Scalar::quad_parts(1, 32, 1, 4096, 5);
    let mu = vec![&Scalar::one() - &x, x];
    let lambda = b2.mul(&b2).mul_vector(&mu);
    let tot = total(lambda.iter());
    let lambda: Vec<Scalar> = lambda.iter().map(|l| l / &tot).collect();
    PresetInput {
        iet: IetSpec::new(exchange_two(), lambda).unwrap(),
        epsilon: Scalar::from_ratio(45, 100),
        budget: TowerBudget {
            max_steps: 64,
            max_hits: 2,
            max_height: 1 << 22,
        },
        reference: ReferenceChoice::default(),
    }
}

/// A two-interval exchange whose normalized orbit is eventually periodic
/// with a long run of same-type steps every period, visiting the imbalanced
/// region infinitely often: `λ = B·(1-θ, θ)` with `θ = (√293 - 17)/2` and
/// `B` the golden positive-return matrix. Yields a strictly deepening tower
/// sequence, one per period.
pub fn periodic_imbalanced_two_exchange() -> PresetInput {
    let b = induct(&exchange_two(), &golden_lengths(), 2)
        .unwrap()
        .cumulative;
    // θ satisfies θ² + 17θ - 1 = 0
    let theta = Scalar::quad_parts(-17, 2, 1, 2, 293);
    let nu = vec![&Scalar::one() - &theta, theta];
    let lambda = b.mul_vector(&nu);
    let tot = total(lambda.iter());
    let lambda: Vec<Scalar> = lambda.iter().map(|l| l / &tot).collect();
    PresetInput {
        iet: IetSpec::new(exchange_two(), lambda).unwrap(),
        epsilon: Scalar::from_ratio(45, 100),
        budget: TowerBudget {
            max_steps: 160,
            max_hits: 3,
            max_height: 1 << 22,
        },
        reference: ReferenceChoice {
            lambda0: Some(golden_lengths()),
        },
    }
}

/// A four-interval exchange with the reversing permutation whose orbit
/// visits the near-half target region of the double-tower construction:
/// `λ = B²μ` with `μ` placed exactly inside the region determined by the
/// construction parameters for `r` discontinuity windows.
pub fn near_half_four_exchange(r: usize) -> PresetInput {
    let pi = Permutation::from_one_based(&[4, 3, 2, 1]).unwrap();
    let lambda0 = vec![
        Scalar::quad_parts(3, 10, 1, 97, 2),
        Scalar::quad_parts(27, 100, -1, 111, 2),
        Scalar::quad_parts(23, 100, 1, 131, 2),
        Scalar::quad_parts(1, 5, -1, 171, 2),
    ];
    let (_m, tr_b) = find_positive_return(&pi, &lambda0, 256).unwrap();
    let b = tr_b.cumulative.clone();
    let rho = Scalar::from_rational(balance_ratio(&b).unwrap());
    let cap1 = Scalar::one() / (Scalar::from_integer(10) * &rho);
    let cap2 = Scalar::from_ratio(1, 8 * (2 * r as i64 + 1));
    let cap = if cap1 < cap2 { cap1 } else { cap2 };
    let mut eps = Scalar::from_ratio(1, 64);
    while eps >= cap {
        eps = eps / Scalar::from_integer(2);
    }
    // the construction will pick δ = (15/32)ε and δ' = δ - ε/(8ρ); place μ
    // in the middle of the induced target windows
    let delta = Scalar::from_ratio(15, 32) * &eps;
    let delta_p = &delta - &eps / (Scalar::from_integer(8) * &rho);
    let w = (&delta - &delta_p) / Scalar::from_integer(4);
    let half = Scalar::from_ratio(1, 2);
    let eta = &w / Scalar::from_integer(1024);
    let eta2 = &w / Scalar::from_integer(2048);
    let sqrt5 = |c: &Scalar| Scalar::quad_parts(0, 1, 1, 1, 5) * c;
    let mu1 = &half - &delta + &w / Scalar::from_integer(2) + sqrt5(&eta);
    let mu4 = &half + &delta_p + &w / Scalar::from_integer(2) - sqrt5(&eta);
    let middle = &Scalar::one() - &mu1 - &mu4;
    let mu2 = &middle / Scalar::from_integer(2) + sqrt5(&eta2);
    let mu3 = &middle / Scalar::from_integer(2) - sqrt5(&eta2);
    let mu = vec![mu1, mu2, mu3, mu4];
    assert!(mu.iter().all(|m| m.is_positive()));
    let lambda = b.mul(&b).mul_vector(&mu);
    let tot = total(lambda.iter());
    let lambda: Vec<Scalar> = lambda.iter().map(|l| l / &tot).collect();
    PresetInput {
        iet: IetSpec::new(pi, lambda).unwrap(),
        epsilon: eps,
        budget: TowerBudget {
            max_steps: 200,
            max_hits: 2,
            max_height: 1 << 22,
        },
        reference: ReferenceChoice {
            lambda0: Some(lambda0),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::towers::build_w_linear;

    #[test]
    fn periodic_preset_yields_deepening_towers() {
        let p = periodic_imbalanced_two_exchange();
        let towers = build_w_linear(&p.iet, &p.epsilon, p.budget, &p.reference).unwrap();
        assert!(towers.len() >= 3, "got {} towers", towers.len());
        for w in towers.windows(2) {
            assert!(w[1].q > w[0].q, "tower heights must strictly increase");
            assert!(
                w[1].i_len < w[0].i_len,
                "induced interval lengths must strictly decrease"
            );
        }
        for t in &towers {
            assert!(t.measure > &Scalar::one() - &p.epsilon);
            assert!(t.certificates.iter().all(|c| c.holds));
        }
    }
}
