use class_uncertainty::datasets::{long_tail_counts, LongTailSpec};
use class_uncertainty::ensemble::{
    aleatoric_ee, epistemic_mi, mean_prediction, per_example_uncertainty, predictive_entropy,
    EnsemblePredictions,
};
use class_uncertainty::losses::{
    class_balanced_weights, combined_weights, csce_weights, ubm_margins, ubrw_weights,
};
use class_uncertainty::measures::{normalize, spearman_rho, Rho};
use class_uncertainty::nn::{decode_model, encode_model, init_model, softmax, Matrix};
use class_uncertainty::samplers::{
    cb_probs, duplication_probs, pb_probs, random_probs, SamplerSchedule,
};
use proptest::prelude::*;

fn prob_rows(members: usize, examples: usize, classes: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, classes), members * examples)
        .prop_map(|rows| rows.iter().flat_map(|r| softmax(r).unwrap()).collect())
}

fn ensemble() -> impl Strategy<Value = EnsemblePredictions<f64>> {
    (1usize..5, 1usize..6, 2usize..7).prop_flat_map(|(t, n, c)| {
        prob_rows(t, n, c).prop_map(move |p| EnsemblePredictions::new(t, n, c, p).unwrap())
    })
}

fn triple_loop(a: &Matrix<f64>, b: &Matrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; a.rows() * b.cols()];
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out[i * b.cols() + j] = s;
        }
    }
    out
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

proptest! {
    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        s in prop::collection::vec(-50.0f64..50.0, 1..12),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&s).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = s.iter().map(|x| x + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_matches_triple_loop(
        (a, b) in (1usize..6, 1usize..6, 1usize..6)
            .prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(k, n)))
    ) {
        let got = a.matmul(&b).unwrap();
        for (x, y) in got.data().iter().zip(triple_loop(&a, &b)) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_matches_layerwise_oracle(seed in 0u64..1000, x in matrix(4, 3)) {
        let model = init_model::<f64>(&[3, 5, 2], seed).unwrap();
        let mut h = x.data().to_vec();
        let mut cols = 3;
        for (l, (w, b)) in model.weights().iter().zip(model.biases()).enumerate() {
            let a = Matrix::new(4, cols, h.clone()).unwrap();
            let mut z = triple_loop(&a, w);
            for r in 0..4 {
                for j in 0..w.cols() {
                    z[r * w.cols() + j] += b[j];
                    if l + 1 < model.num_layers() {
                        z[r * w.cols() + j] = z[r * w.cols() + j].max(0.0);
                    }
                }
            }
            h = z;
            cols = w.cols();
        }
        for (got, want) in model.forward(&x).unwrap().data().iter().zip(&h) {
            prop_assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..1000, hidden in 1usize..8) {
        let model = init_model::<f64>(&[3, hidden, 4], seed).unwrap();
        prop_assert_eq!(decode_model::<f64>(&encode_model(&model)).unwrap(), model);
    }

    #[test]
    fn normalize_is_idempotent(v in prop::collection::vec(0.0f64..10.0, 1..10)) {
        let once = normalize(&v).unwrap();
        prop_assert!((once.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let twice = normalize(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn spearman_is_bounded_symmetric_and_rank_based(
        xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..15)
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let r = spearman_rho(&x, &y).unwrap();
        prop_assert_eq!(r, spearman_rho(&y, &x).unwrap());
        // A strictly increasing transform leaves ranks, hence rho, unchanged.
        let warped: Vec<f64> = x.iter().map(|v| v.exp() + 3.0 * v).collect();
        let r2 = spearman_rho(&warped, &y).unwrap();
        match (r, r2) {
            (Rho::Defined(a), Rho::Defined(b)) => {
                prop_assert!((-1.0..=1.0).contains(&a));
                prop_assert!((a - b).abs() < 1e-12);
            }
            (Rho::Undefined, Rho::Undefined) => {}
            _ => prop_assert!(false, "status changed under a monotone transform"),
        }
    }

    #[test]
    fn weight_constructors_sum_to_class_count(counts in prop::collection::vec(1usize..1000, 1..12)) {
        let c = counts.len() as f64;
        let sum = |w: &[f64]| w.iter().sum::<f64>();
        prop_assert!((sum(csce_weights::<f64>(&counts).unwrap().values()) - c).abs() < 1e-9);
        prop_assert!((sum(class_balanced_weights::<f64>(&counts, 0.999).unwrap().values()) - c).abs() < 1e-9);
        let mu = normalize(&counts.iter().map(|&n| n as f64).collect::<Vec<_>>()).unwrap();
        let wu = ubrw_weights(&mu).unwrap();
        prop_assert!((sum(wu.values()) - c).abs() < 1e-9);
        let wc = csce_weights::<f64>(&counts).unwrap();
        prop_assert_eq!(combined_weights(&wu, &wc, 0.0).unwrap(), wc.clone());
        prop_assert_eq!(combined_weights(&wu, &wc, 1.0).unwrap(), wu);
    }

    #[test]
    fn ubm_margins_peak_at_tau_and_ignore_scale(
        mu in prop::collection::vec(0.01f64..3.0, 1..10),
        scale in 0.01f64..100.0,
        tau in 0.01f64..2.0,
    ) {
        let m = ubm_margins(&mu, tau).unwrap();
        prop_assert_eq!(m.deltas.iter().copied().fold(f64::MIN, f64::max), tau);
        let scaled: Vec<f64> = mu.iter().map(|v| v * scale).collect();
        for (a, b) in m.deltas.iter().zip(ubm_margins(&scaled, tau).unwrap().deltas) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplication_moves_mass_toward_small_classes(
        counts in prop::collection::vec(1usize..500, 2..8),
        l1 in 0.0f64..1.0,
        l2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = duplication_probs::<f64>(lo, &counts).unwrap();
        let b = duplication_probs::<f64>(hi, &counts).unwrap();
        let smallest = (0..counts.len()).min_by_key(|&c| counts[c]).unwrap();
        prop_assert!(b.values()[smallest] >= a.values()[smallest] - 1e-12);
        let natural = random_probs::<f64>(&counts).unwrap();
        for (x, y) in duplication_probs::<f64>(0.0, &counts).unwrap().values().iter().zip(natural.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pb_schedule_stays_between_endpoints(
        counts in prop::collection::vec(1usize..500, 2..8),
        total in 1usize..50,
        frac in 0.0f64..=1.0,
    ) {
        let start = random_probs::<f64>(&counts).unwrap();
        let end = cb_probs::<f64>(counts.len()).unwrap();
        let schedule = SamplerSchedule::new(start.clone(), end.clone(), total).unwrap();
        let epoch = (frac * total as f64).round() as usize;
        let alpha = pb_probs(epoch, &schedule).unwrap();
        for ((a, s), e) in alpha.values().iter().zip(start.values()).zip(end.values()) {
            prop_assert!(*a >= s.min(*e) - 1e-12 && *a <= s.max(*e) + 1e-12);
        }
    }

    #[test]
    fn long_tail_counts_decay_from_n_bar(
        n_bar in 10usize..5000,
        ir in 1.0f64..20.0,
        c in 2usize..50,
    ) {
        let counts = long_tail_counts(&LongTailSpec { n_bar, imbalance_ratio: ir, num_classes: c }).unwrap();
        prop_assert_eq!(counts[0], n_bar);
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        let tail = (n_bar as f64 / ir).round().max(1.0) as usize;
        prop_assert_eq!(counts[c - 1], tail);
    }

    #[test]
    fn uncertainty_decomposition(ens in ensemble()) {
        let u = per_example_uncertainty(&ens);
        let mi = epistemic_mi(&ens);
        let ee = aleatoric_ee(&ens);
        let bound = (ens.classes() as f64).ln();
        let mean = mean_prediction(&ens);
        for i in 0..ens.examples() {
            prop_assert!(u[i] >= 0.0 && u[i] <= bound + 1e-12);
            prop_assert!(mi[i] >= 0.0);
            prop_assert!((u[i] - (mi[i] + ee[i])).abs() <= 1e-9);
            // Oracle: entropy of a loop-averaged member distribution.
            let avg: Vec<f64> = (0..ens.classes())
                .map(|c| (0..ens.members()).map(|t| ens.row(t, i)[c]).sum::<f64>() / ens.members() as f64)
                .collect();
            for (a, b) in avg.iter().zip(mean.row(i)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!((predictive_entropy(&avg).unwrap() - u[i]).abs() <= 1e-9);
        }
    }
}
