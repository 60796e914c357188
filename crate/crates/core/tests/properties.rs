use drc::augment::{augment_rows, AugmentSpec};
use drc::losses::{af_loss, ap_loss, cr_loss, info_nce};
use drc::metrics::{acc, ari, nmi};
use drc::model::ClusterModel;
use drc::{Graph, Tensor};
use proptest::prelude::*;

fn matrix(
    rows: std::ops::RangeInclusive<usize>,
    cols: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Tensor> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c)
            .prop_map(move |d| Tensor::matrix(r, c, d).unwrap())
    })
}

fn softmax(t: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let v = g.constant(t.clone());
    let p = g.softmax_rows(v).unwrap();
    g.value(p).clone()
}

fn scalar(f: impl FnOnce(&mut Graph) -> drc::Var) -> f64 {
    let mut g = Graph::new();
    let v = f(&mut g);
    g.value(v).item()
}

/// Applies `perm` to the rows (`rows = true`) or columns of `t`.
fn permute(t: &Tensor, perm: &[usize], rows: bool) -> Tensor {
    if rows {
        return t.select_rows(perm);
    }
    t.transpose().select_rows(perm).transpose()
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(x in matrix(1..=6, 1..=6)) {
        let p = softmax(&x);
        for row in p.row_iter() {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn argmax_ignores_row_shift(x in matrix(1..=6, 1..=6), c in -50.0f64..50.0) {
        let shifted = x.map(|v| v + c);
        prop_assert_eq!(softmax(&x).argmax_rows(), softmax(&shifted).argmax_rows());
        prop_assert_eq!(x.argmax_rows(), softmax(&x).argmax_rows());
    }

    #[test]
    fn info_nce_nonnegative(s in matrix(1..=6, 1..=1).prop_flat_map(|t| matrix(t.rows()..=t.rows(), t.rows()..=t.rows())),
                            t in 0.1f64..3.0) {
        let l = scalar(|g| { let v = g.constant(s.clone()); info_nce(g, v, t).unwrap() });
        prop_assert!(l >= -1e-12);
    }

    #[test]
    fn af_loss_sample_permutation_invariant(
        (z, za, perm) in matrix(2..=7, 2..=5).prop_flat_map(|z| {
            let (n, k) = (z.rows(), z.cols());
            (Just(z), matrix(n..=n, k..=k), permutation(n))
        })
    ) {
        let f = |a: &Tensor, b: &Tensor| scalar(|g| {
            let (x, y) = (g.constant(a.clone()), g.constant(b.clone()));
            af_loss(g, x, y, 0.5, true).unwrap()
        });
        let base = f(&z, &za);
        let moved = f(&permute(&z, &perm, true), &permute(&za, &perm, true));
        prop_assert!((base - moved).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn ap_loss_cluster_permutation_invariant(
        (z, za, perm) in matrix(2..=7, 2..=5).prop_flat_map(|z| {
            let (n, k) = (z.rows(), z.cols());
            (Just(z), matrix(n..=n, k..=k), permutation(k))
        })
    ) {
        let (p, pa) = (softmax(&z), softmax(&za));
        let f = |a: &Tensor, b: &Tensor| scalar(|g| {
            let (x, y) = (g.constant(a.clone()), g.constant(b.clone()));
            ap_loss(g, x, y, 0.95).unwrap()
        });
        let base = f(&p, &pa);
        let moved = f(&permute(&p, &perm, false), &permute(&pa, &perm, false));
        prop_assert!((base - moved).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn cr_loss_within_balanced_and_collapsed(z in matrix(1..=10, 1..=5)) {
        let p = softmax(&z);
        let (n, k) = (p.rows() as f64, p.cols() as f64);
        let l = scalar(|g| { let v = g.constant(p.clone()); cr_loss(g, v).unwrap() });
        prop_assert!(l >= n / k - 1e-9 && l <= n + 1e-9);
    }

    #[test]
    fn metrics_relabeling_invariant(
        (truth, pred, perm) in (2usize..=5).prop_flat_map(|k| (
            prop::collection::vec(0..k, 4..40),
            Just(k),
        )).prop_flat_map(|(truth, k)| {
            let n = truth.len();
            (Just(truth), prop::collection::vec(0..k, n..=n), permutation(k))
        })
    ) {
        let k = perm.len();
        let relabeled: Vec<usize> = pred.iter().map(|&l| perm[l]).collect();
        prop_assert_eq!(acc(&pred, &truth, k).unwrap(), acc(&relabeled, &truth, k).unwrap());
        prop_assert!((nmi(&pred, &truth).unwrap() - nmi(&relabeled, &truth).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&pred, &truth).unwrap() - ari(&relabeled, &truth).unwrap()).abs() < 1e-12);
        let a = acc(&pred, &truth, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let m = nmi(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
    }

    #[test]
    fn acc_beats_chance_on_balanced_truth(k in 2usize..=5, per in 1usize..8, pred_seed in any::<u64>()) {
        let truth: Vec<usize> = (0..k * per).map(|i| i % k).collect();
        let pred: Vec<usize> = (0..k * per)
            .map(|i| ((pred_seed.wrapping_mul(i as u64 + 1) >> 7) % k as u64) as usize)
            .collect();
        prop_assert!(acc(&pred, &truth, k).unwrap() >= 1.0 / k as f64 - 1e-12);
    }

    #[test]
    fn forward_is_row_independent(
        (x, perm) in matrix(1..=6, 3..=3).prop_flat_map(|x| { let n = x.rows(); (Just(x), permutation(n)) }),
        seed in 0u64..100
    ) {
        let m = ClusterModel::init(&[3, 5, 2], seed).unwrap();
        let (z, _) = m.forward(&x).unwrap();
        let (zp, _) = m.forward(&x.select_rows(&perm)).unwrap();
        prop_assert_eq!(zp, z.select_rows(&perm));
        let (z0, _) = m.forward(&x.select_rows(&[0])).unwrap();
        prop_assert_eq!(z0.row(0), z.row(0));
    }

    #[test]
    fn augmentation_depends_only_on_key(x in matrix(2..=6, 1..=4), step in any::<u64>(), seed in any::<u64>()) {
        let spec = AugmentSpec::gaussian(0.3, seed);
        let ids: Vec<u64> = (0..x.rows() as u64).map(|i| i * 7 + 1).collect();
        let all = augment_rows(&x, &spec, step, 1, &ids).unwrap();
        let rev: Vec<usize> = (0..x.rows()).rev().collect();
        let rev_ids: Vec<u64> = rev.iter().map(|&i| ids[i]).collect();
        let back = augment_rows(&x.select_rows(&rev), &spec, step, 1, &rev_ids).unwrap();
        prop_assert_eq!(back, all.select_rows(&rev));
    }
}
