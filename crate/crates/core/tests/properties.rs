//! Cross-module invariants under random seeds.

use polychar::charfn::{default_horizon, degree_of, CharFn};
use polychar::decomp::phi_default;
use polychar::fixtures::{gen_section7, generate, random_unitary, FixtureSpec};
use polychar::fock::abelianization_residual;
use polychar::opcore::{hstack, op_norm, range_basis_scaled, svd, CMatrix};
use polychar::tuples::MultiIndex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reconstruct(a: &CMatrix) -> f64 {
    let f = svd(a);
    let mut us = f.u.clone();
    for (k, s) in f.s.iter().enumerate() {
        us.column_mut(k).scale_mut(*s);
    }
    op_norm(&(us * f.v.adjoint() - a))
}

/// Rank-deficient stacks of conjugated shift matrices once produced SVDs
/// that missed part of the column space.
#[test]
fn svd_of_conjugated_shift_blocks_is_accurate() {
    let t0 = gen_section7(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let u = random_unitary(t0.dim(), &mut rng);
        let t = t0.conjugate(&u);
        let rows: Vec<&CMatrix> = t.mats().iter().collect();
        let h = hstack(&rows);
        assert!(reconstruct(&h) < 1e-13);
        let basis = range_basis_scaled(&h, 1e-9, 1.0);
        let q = basis.basis();
        assert!(op_norm(&(&h - q * (q.adjoint() * &h))) < 1e-13);
        assert_eq!(phi_default(&t).unwrap().to_string(), "(0, 4, 0)");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coefficient_norms_are_unitarily_invariant(seed in any::<u64>(), d in 2usize..5) {
        let t = generate(&FixtureSpec::RandomCommuting { n: 2, d, seed }).unwrap().tuple;
        let u = random_unitary(d, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let s = t.conjugate(&u);
        let (a, b) = (CharFn::new(&t).unwrap(), CharFn::new(&s).unwrap());
        for k in 0..4 {
            for alpha in MultiIndex::all_of_degree(2, k) {
                let x = op_norm(&a.coeff(&alpha).unwrap());
                let y = op_norm(&b.coeff(&alpha).unwrap());
                prop_assert!((x - y).abs() < 1e-10, "{alpha:?}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn abelianization_matches_commutative_coefficients(seed in any::<u64>(), n in 2usize..4, d in 1usize..5) {
        let t = generate(&FixtureSpec::RandomCommuting { n, d, seed }).unwrap().tuple;
        prop_assert!(abelianization_residual(&t, 4).unwrap() < 1e-9);
    }

    #[test]
    fn degree_is_conjugation_invariant(seed in any::<u64>(), m in 1usize..4) {
        let t = generate(&FixtureSpec::NilpotentPoly { n: 2, m }).unwrap().tuple;
        let u = random_unitary(t.dim(), &mut ChaCha8Rng::seed_from_u64(seed));
        let s = t.conjugate(&u);
        prop_assert_eq!(degree_of(&s, default_horizon(&s)).unwrap().degree, degree_of(&t, default_horizon(&t)).unwrap().degree);
    }

    #[test]
    fn values_inside_the_ball_are_contractions(seed in any::<u64>(), d in 1usize..6, r in 0.0f64..0.95) {
        let t = generate(&FixtureSpec::RandomCommuting { n: 2, d, seed }).unwrap().tuple;
        let cf = CharFn::new(&t).unwrap();
        let z = [(r * 0.6).into(), (r * 0.8).into()];
        prop_assert!(op_norm(&cf.eval(&z).unwrap()) <= 1.0 + 1e-10);
    }
}
