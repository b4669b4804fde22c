// scratch timing probe
use ietflow::presets;
use ietflow::towers::{build_w_linear, TowerBudget};
use ietflow::roof::birkhoff_sum;
use ietflow::joinings::{sample_u64, sample_unit};
use ietflow::Scalar;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let p2 = presets::periodic_imbalanced_two_exchange();
    let shallow = TowerBudget { max_hits: 2, ..p2.budget };
    let towers2 = build_w_linear(&p2.iet, &p2.epsilon, shallow, &p2.reference).unwrap();
    println!("build 2 towers: {:?} (q = {:?})", t0.elapsed(), towers2.iter().map(|t| t.q).collect::<Vec<_>>());
    let tower = &towers2[1];
    let f = ietflow::roof::PiecewiseAffine::affine(Scalar::one(), Scalar::one());
    let t1 = Instant::now();
    let mut acc = Scalar::zero();
    for s in 0..100u64 {
        let level = (sample_u64(1, 3, s) % tower.q as u64) as usize;
        let frac = sample_unit(2, 3, s);
        let x = &tower.j.lo + tower.j.length() * frac + &tower.translations[level];
        acc = acc + birkhoff_sum(&f, &p2.iet, 2 * tower.q as i64, &x).unwrap();
    }
    println!("100 birkhoff 2q-sums at q=597: {:?} ({})", t1.elapsed(), acc.to_f64());
}
