mod common;

use itertools::Itertools;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfsense::pep::{enumerate_errors, pep_report, quad_form_matrix, union_bound, upep, SupportHypothesis};
use cfsense::C64;

use common::*;

/// 1 / det(I + D A^H A D / (4 N0)) with D = diag(e_i sqrt(c_i)), on the full
/// grid.
fn full_upep(e: &[i8], a: &Dense, c: &[f64], n0: f64) -> f64 {
    let d: Vec<f64> = e.iter().zip(c).map(|(&ei, &ci)| ei as f64 * ci.sqrt()).collect();
    let gram = matmul(&adjoint(a), a);
    let q = c.len();
    let m: Dense = (0..q)
        .map(|r| (0..q).map(|k| gram[r][k] * (d[r] * d[k] / (4.0 * n0))).collect())
        .collect();
    1.0 / determinant(&add(&identity(q), &m)).re
}

fn instance(rng: &mut ChaCha8Rng, rows: usize, q: usize, l: usize) -> (Dense, Vec<usize>, Vec<f64>) {
    let a = random_dense(rng, rows, q);
    let truth = sample(rng, q, l).into_vec();
    let mut c = vec![0.0; q];
    for &i in &truth {
        c[i] = rng.gen_range(0.5..3.0);
    }
    (a, truth, c)
}

#[test]
fn restricted_block_matches_full_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let rows = rng.gen_range(2..=8);
        let (a, truth, c) = instance(&mut rng, rows, 7, 3);
        let n0 = rng.gen_range(0.1..3.0);
        let hyp = SupportHypothesis::from_indices(7, &truth).unwrap();
        for e in enumerate_errors(&hyp, 3).unwrap() {
            let exact = full_upep(&e.dense(), &a, &c, n0);
            let got = upep(&e, to_mat(&a).as_ref(), &c, n0).unwrap();
            assert!((got - exact).abs() < 1e-10 * exact, "{got} vs {exact}");
            let form = quad_form_matrix(&e, to_mat(&a).as_ref(), &c).unwrap();
            assert!(form.indices.iter().all(|&i| e.removed.contains(&i)));
        }
    }
}

#[test]
fn union_bound_matches_brute_force_over_alternatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (a, truth, c) = instance(&mut rng, 5, 6, 2);
        let n0 = rng.gen_range(0.2..2.0);
        let hyp = SupportHypothesis::from_indices(6, &truth).unwrap();
        let mut brute = 0.0;
        for alt in (0..6).combinations(2) {
            let moved = truth.iter().filter(|i| !alt.contains(i)).count();
            if moved == 1 {
                let e: Vec<i8> = (0..6)
                    .map(|i| truth.contains(&i) as i8 - alt.contains(&i) as i8)
                    .collect();
                brute += full_upep(&e, &a, &c, n0);
            }
        }
        let ub = union_bound(&hyp, to_mat(&a).as_ref(), &c, n0, 1).unwrap();
        assert!((ub - brute).abs() < 1e-10 * brute, "{ub} vs {brute}");
        let report = pep_report(&hyp, to_mat(&a).as_ref(), &c, n0, 1).unwrap();
        assert_eq!(report.records.len(), 8);
        assert!((report.union_bound - ub).abs() <= 1e-14 * ub);
    }
}

#[test]
fn bound_is_invariant_to_joint_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, truth, c) = instance(&mut rng, 6, 8, 3);
    let hyp = SupportHypothesis::from_indices(8, &truth).unwrap();
    let base = union_bound(&hyp, to_mat(&a).as_ref(), &c, 0.7, 2).unwrap();

    let a2 = scale(&a, 3.0);
    let scaled_a = union_bound(&hyp, to_mat(&a2).as_ref(), &c, 0.7 * 9.0, 2).unwrap();
    assert!((scaled_a - base).abs() < 1e-10 * base);

    let c2: Vec<f64> = c.iter().map(|v| v * 5.0).collect();
    let scaled_c = union_bound(&hyp, to_mat(&a).as_ref(), &c2, 0.7 * 5.0, 2).unwrap();
    assert!((scaled_c - base).abs() < 1e-10 * base);

    let phase = C64::from_polar(1.0, 0.9);
    let rotated: Dense = a.iter().map(|r| r.iter().map(|v| v * phase).collect()).collect();
    let rot = union_bound(&hyp, to_mat(&rotated).as_ref(), &c, 0.7, 2).unwrap();
    assert!((rot - base).abs() < 1e-10 * base);
}

#[test]
fn bound_grows_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (a, truth, c) = instance(&mut rng, 6, 8, 3);
    let hyp = SupportHypothesis::from_indices(8, &truth).unwrap();
    let values: Vec<f64> = [0.01, 0.1, 1.0, 10.0, 100.0]
        .iter()
        .map(|&n0| union_bound(&hyp, to_mat(&a).as_ref(), &c, n0, 2).unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
    let count = enumerate_errors(&hyp, 2).unwrap().len() as f64;
    assert!(values[4] < count && values[4] > 0.9 * count);
}

#[test]
fn bad_inputs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, truth, c) = instance(&mut rng, 4, 5, 2);
    let hyp = SupportHypothesis::from_indices(5, &truth).unwrap();
    let am = to_mat(&a);
    assert!(union_bound(&hyp, am.as_ref(), &c, 0.0, 1).is_err());
    assert!(union_bound(&hyp, am.as_ref(), &c[..4], 1.0, 1).is_err());
    assert!(union_bound(&hyp, am.as_ref(), &c, 1.0, 0).is_err());
    let mut neg = c.clone();
    neg[0] = -1.0;
    assert!(union_bound(&hyp, am.as_ref(), &neg, 1.0, 1).is_err());
    assert!(SupportHypothesis::from_indices(5, &[7]).is_err());
}
