#[path = "common/oracle.rs"]
mod oracle;

use std::time::Instant;

use mammo_dissect::simcore::{
    concept_activation_matrix, concept_conditionals, hard_wpmi, similarity_matrix, soft_wpmi, ConceptActivationMatrix,
    SimParams, SimilarityKernel,
};
use mammo_dissect::Matrix;
use oracle::Knobs;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Instance {
    img: Vec<Vec<f64>>,
    txt: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    params: SimParams,
}

fn table(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=32);
    let m = rng.random_range(1..=16);
    let k = rng.random_range(1..=8);
    let d = rng.random_range(1..=6);
    let img = table(&mut rng, n, d);
    let txt = table(&mut rng, m, d);
    // Every third instance uses coarse activations so ties are exercised.
    let coarse = seed % 3 == 0;
    let acts = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| {
                    if coarse {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    let start = rng.random_range(0.5..=1.0);
    let params = SimParams {
        lambda: rng.random_range(0.0..2.0),
        top_z: rng.random_range(1..=n),
        temperature: rng.random_range(0.5..20.0),
        membership_start: start,
        membership_end: rng.random_range(0.3..=start),
        min_prob: [1e-7, 1e-10, 1e-3 / m as f64][rng.random_range(0..3)],
    };
    Instance { img, txt, acts, params }
}

fn knobs(p: &SimParams) -> Knobs {
    Knobs {
        lambda: p.lambda,
        z: p.top_z,
        a: p.temperature,
        start: p.membership_start,
        end: p.membership_end,
        eps: p.min_prob,
    }
}

fn matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

#[test]
fn similarity_matches_direct_transliteration() {
    let t0 = Instant::now();
    for seed in 0..200 {
        let inst = instance(seed);
        let p = concept_activation_matrix(&matrix(&inst.img), &matrix(&inst.txt)).unwrap();
        let s = similarity_matrix(&p, &matrix(&inst.acts), &inst.params, "l").unwrap();
        let expected = oracle::similarity(&inst.img, &inst.txt, &inst.acts, &knobs(&inst.params));
        for (k, row) in expected.iter().enumerate() {
            for (m, want) in row.iter().enumerate() {
                let got = s.values.get(k, m);
                assert!(
                    oracle::close(got, *want, 1e-10),
                    "seed {seed} ({k},{m}): {got} vs {want}"
                );
            }
        }
    }
    assert!(t0.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn soft_with_unit_membership_is_hard() {
    for seed in 1000..1050 {
        let inst = instance(seed);
        let params = SimParams {
            membership_start: 1.0,
            membership_end: 1.0,
            ..inst.params
        };
        let p = concept_activation_matrix(&matrix(&inst.img), &matrix(&inst.txt)).unwrap();
        let cond = concept_conditionals(&p.values, params.temperature);
        let acts = matrix(&inst.acts);
        for k in 0..acts.cols() {
            let q = acts.column(k);
            let soft = soft_wpmi(&cond, &q, &params);
            let hard = hard_wpmi(&cond, &q, &params);
            let oracle_hard = oracle::hard(
                &oracle::softmax_rows(&oracle::activation(&inst.img, &inst.txt), params.temperature),
                &q,
                &knobs(&params),
            );
            for ((s, h), o) in soft.iter().zip(&hard).zip(&oracle_hard) {
                assert!(oracle::close(*s, *h, 1e-12), "seed {seed}: {s} vs {h}");
                assert!(oracle::close(*h, *o, 1e-10));
            }
        }
    }
}

#[test]
fn frozen_small_instance() {
    // Computed once by an independent script and frozen here.
    let p = ConceptActivationMatrix {
        values: Matrix::from_rows(&[[0.9, 0.1], [0.8, 0.2], [0.1, 0.9], [0.2, 0.8]]).unwrap(),
        normalized: true,
    };
    let params = SimParams {
        lambda: 1.0,
        top_z: 2,
        temperature: 1.0,
        membership_start: 1.0,
        membership_end: 0.97,
        min_prob: 1e-7,
    };
    let acts = Matrix::from_rows(&[[4.0], [3.0], [2.0], [1.0]]).unwrap();
    let s = similarity_matrix(&p, &acts, &params, "l").unwrap();
    assert!((s.values.get(0, 0) - -0.09911115462795794).abs() < 1e-10);
    assert!((s.values.get(0, 1) - -1.4622196164754047).abs() < 1e-10);
    assert_eq!(s.params, params);
    assert_eq!(s.layer_name, "l");
}

#[test]
fn params_are_validated_against_the_probe() {
    let p = ConceptActivationMatrix {
        values: Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4]]).unwrap(),
        normalized: true,
    };
    let acts = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
    let params = SimParams {
        top_z: 3,
        ..SimParams::default()
    };
    assert!(similarity_matrix(&p, &acts, &params, "l").is_err());
}

fn random_p(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ConceptActivationMatrix {
    ConceptActivationMatrix {
        values: Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)).unwrap(),
        normalized: true,
    }
}

fn strictly_ordered_alike(a: &[f64], b: &[f64]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| a[i].partial_cmp(&a[j]) == b[i].partial_cmp(&b[j])))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_invariance(seed in any::<u64>(), n in 2usize..24, m in 1usize..10, z in 1usize..24, which in 0usize..3) {
        let z = z.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_p(&mut rng, n, m);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t: Vec<f64> = q.iter().map(|&x| match which {
            0 => x.exp(),
            1 => x * x * x + 7.0 * x,
            _ => 8.0 * x,
        }).collect();
        prop_assume!(strictly_ordered_alike(&q, &t));
        let params = SimParams { top_z: z, ..SimParams::default() };
        let a = similarity_matrix(&p, &Matrix::new(n, 1, q).unwrap(), &params, "l").unwrap();
        let b = similarity_matrix(&p, &Matrix::new(n, 1, t).unwrap(), &params, "l").unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn softmax_shift_invariance(seed in any::<u64>(), n in 2usize..20, m in 1usize..10, row in 0usize..20, shift in -5.0f64..5.0) {
        let row = row % n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_p(&mut rng, n, m);
        let acts = Matrix::from_fn(n, 3, |_, _| rng.random::<f64>()).unwrap();
        let shifted = ConceptActivationMatrix {
            values: Matrix::from_fn(n, m, |i, j| p.values.get(i, j) + if i == row { shift } else { 0.0 }).unwrap(),
            normalized: false,
        };
        let params = SimParams { top_z: n.min(5), ..SimParams::default() };
        let c0 = concept_conditionals(&p.values, params.temperature);
        let c1 = concept_conditionals(&shifted.values, params.temperature);
        for (a, b) in c0.as_slice().iter().zip(c1.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let a = similarity_matrix(&p, &acts, &params, "l").unwrap();
        let b = similarity_matrix(&shifted, &acts, &params, "l").unwrap();
        for (x, y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y);
        }
    }

    #[test]
    fn probe_permutation_invariance(seed in any::<u64>(), n in 2usize..24, m in 1usize..10, z in 1usize..24) {
        let z = z.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_p(&mut rng, n, m);
        let acts = Matrix::from_fn(n, 4, |_, _| rng.random::<f64>()).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pp = ConceptActivationMatrix { values: p.values.select_rows(&perm), normalized: true };
        let params = SimParams { top_z: z, ..SimParams::default() };
        let a = similarity_matrix(&p, &acts, &params, "l").unwrap();
        let b = similarity_matrix(&pp, &acts.select_rows(&perm), &params, "l").unwrap();
        for (x, y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn lambda_linearity(seed in any::<u64>(), n in 2usize..24, m in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_p(&mut rng, n, m);
        let acts = Matrix::from_fn(n, 3, |_, _| rng.random::<f64>()).unwrap();
        let base = SimParams { top_z: n.min(7), lambda: 0.0, ..SimParams::default() };
        let s0 = similarity_matrix(&p, &acts, &base, "l").unwrap();
        let kernel = SimilarityKernel::new(&p, base).unwrap();
        let log_p = kernel.statistics().log_marginal();
        for lambda in [1.0, 2.0] {
            let s = similarity_matrix(&p, &acts, &SimParams { lambda, ..base }, "l").unwrap();
            for k in 0..3 {
                for (j, lp) in log_p.iter().enumerate() {
                    let want = s0.values.get(k, j) - lambda * lp;
                    prop_assert!(oracle::close(s.values.get(k, j), want, 1e-10));
                }
            }
        }
    }

    #[test]
    fn outputs_are_finite(seed in any::<u64>(), n in 1usize..16, m in 1usize..8, temperature in 0.01f64..500.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_p(&mut rng, n, m);
        let acts = Matrix::from_fn(n, 2, |_, _| rng.random_range(-1e6..1e6)).unwrap();
        let params = SimParams {
            top_z: n,
            temperature,
            membership_start: 1.0,
            membership_end: 1.0,
            min_prob: 1e-300,
            ..SimParams::default()
        };
        let s = similarity_matrix(&p, &acts, &params, "l").unwrap();
        prop_assert!(s.values.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn normalisation_gives_unit_rows(rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 1..10)) {
        prop_assume!(rows.iter().all(|r| r.iter().any(|v| v.abs() > 1e-6)));
        let m = Matrix::from_rows(&rows).unwrap();
        let n = mammo_dissect::simcore::l2_normalize_rows(&m).unwrap();
        for r in n.row_iter() {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn conditionals_are_distributions(seed in any::<u64>(), n in 1usize..10, m in 1usize..12, a in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_p(&mut rng, n, m);
        let c = concept_conditionals(&p.values, a);
        for row in c.row_iter() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
