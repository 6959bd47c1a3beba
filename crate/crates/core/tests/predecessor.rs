use dpstream_core::dyadic::DyadicIndex;
use dpstream_core::predecessor::{PredParams, PredTree, QueryCase};
use dpstream_core::NoiseSource;
use proptest::prelude::*;

fn small(eps: f64) -> PredParams {
    let mut p = PredParams::new(eps, 0.1);
    p.c1 = 0.1;
    p.c2 = 0.5;
    p
}

fn count(set: &[bool], a: u64, b: u64) -> usize {
    set[a as usize..=b as usize].iter().filter(|p| **p).count()
}

fn check_cover(idx: &DyadicIndex, cover: &[(u64, u64)], a: u64, b: u64) {
    let want: Vec<(u64, u64)> = idx
        .cover(a, b)
        .unwrap()
        .iter()
        .map(|iv| (iv.start, iv.end))
        .collect();
    assert_eq!(cover, want.as_slice());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn structure_invariants(seed in any::<u64>(), xs in prop::collection::vec(1u64..=64, 1..300)) {
        let mut src = NoiseSource::live(seed);
        let mut tree = PredTree::new(64, small(1.0)).unwrap();
        let idx = DyadicIndex::new(64).unwrap();
        let mut prev = tree.marks_snapshot();
        for x in xs {
            tree.pred_insert(x, &mut src).unwrap();
            let now = tree.marks_snapshot();
            for (p, n) in prev.iter().zip(&now) {
                prop_assert_eq!(p & n, *p);
            }
            prev = now;
            prop_assert!(tree.marks_consistent());
            prop_assert!(tree.light_ancestor_claim());
            for q in [1, x, 64] {
                let ans = tree.pred_query_detailed(q).unwrap();
                match ans.case {
                    QueryCase::Empty | QueryCase::Heavy => check_cover(&idx, &ans.cover, 1, q),
                    _ => {
                        if let Some(&(s, _)) = ans.cover.first() {
                            check_cover(&idx, &ans.cover, s, q);
                        }
                    }
                }
                if let Some(v) = ans.value {
                    prop_assert!(v <= q);
                }
            }
        }
    }

    #[test]
    fn noise_off_sandwich(xs in prop::collection::vec(1u64..=128, 1..400)) {
        let mut src = NoiseSource::off();
        let mut tree = PredTree::new(128, small(1.0)).unwrap();
        let mut set = vec![false; 129];
        for x in xs {
            tree.pred_insert(x, &mut src).unwrap();
            set[x as usize] = true;
            for n in tree.nodes().iter().filter(|n| n.marks.finished) {
                prop_assert!(count(&set, n.start, n.end) >= 1);
            }
            let bound = tree.pred_error_at(tree.t());
            for q in (1..=128).step_by(9) {
                match tree.pred_query(q).unwrap() {
                    Some(v) => {
                        let c = count(&set, v, q) as f64;
                        prop_assert!(c >= 1.0 && c <= bound, "q={} v={} c={}", q, v, c);
                    }
                    None => prop_assert!(count(&set, 1, q) as f64 <= bound),
                }
            }
        }
    }
}

#[test]
fn bound_is_monotone_and_scales() {
    let mut src = NoiseSource::live(1);
    let mut tree = PredTree::new(1 << 10, PredParams::new(1.0, 0.1)).unwrap();
    let mut prev = 0.0;
    for t in 1..=300u64 {
        tree.pred_insert((t * 37) % 1024 + 1, &mut src).unwrap();
        let b = tree.pred_error_at(t);
        assert!(b >= prev && b > 0.0);
        prev = b;
    }
    let half = PredTree::new(
        1 << 10,
        PredParams {
            c1: 250.0 * 2.0,
            c2: 50.0 * 2.0,
            ..PredParams::new(0.5, 0.1)
        },
    )
    .unwrap();
    let one = PredTree::new(1 << 10, PredParams::new(1.0, 0.1)).unwrap();
    assert!((half.k2(5) - 2.0 * one.k2(5)).abs() < 1e-6 * one.k2(5));
    let (h, o) = (
        half.unfinished_bound(5) - 1.0,
        one.unfinished_bound(5) - 1.0,
    );
    assert!((h - 2.0 * o).abs() < 1e-6 * o);
}

#[test]
fn before_root_activation_everything_is_bottom() {
    let mut src = NoiseSource::live(3);
    let mut tree = PredTree::new(256, small(1.0)).unwrap();
    for x in 1..=16 {
        tree.pred_insert(x, &mut src).unwrap();
        for q in 1..=256 {
            assert_eq!(tree.pred_query(q).unwrap(), None);
        }
    }
}

#[test]
fn duplicates_advance_time_only() {
    let mut src = NoiseSource::off();
    let mut tree = PredTree::new(16, PredParams::new(1.0, 0.1)).unwrap();
    for _ in 0..9 {
        tree.pred_insert(3, &mut src).unwrap();
    }
    assert_eq!(tree.t(), 9);
    assert_eq!(tree.len(), 1);
    assert_eq!(tree.nodes()[0].noisy, 1.0);
    assert!(tree.pred_insert(17, &mut src).is_err());
}

#[test]
fn total_budget_constructor_halves() {
    let t = PredTree::with_total_budget(64, 2.0, 0.1).unwrap();
    assert_eq!(t.params().eps, 1.0);
}
