use dpstream_core::counting::{CountingTree, HistogramMechanism, HistogramNoise, Horizon};
use dpstream_core::range_count::{RangeCountStore, RangeOp};
use dpstream_core::{NoiseMode, NoiseSource};
use proptest::prelude::*;

fn horizon(known: bool, n: usize) -> Horizon {
    if known {
        Horizon::Known(n as u64)
    } else {
        Horizon::Unknown
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counting_tree_is_prefix_sum(bits in prop::collection::vec(0u8..=1, 1..2000), known in any::<bool>()) {
        let mut src = NoiseSource::off();
        let mut tree = CountingTree::laplace(horizon(known, bits.len()), 1.0, NoiseMode::Off).unwrap();
        let mut sum = 0.0;
        for b in bits {
            tree.insert(b as f64, &mut src).unwrap();
            sum += b as f64;
            prop_assert_eq!(tree.query().unwrap(), sum);
        }
    }

    #[test]
    fn histogram_is_column_sums(
        d in 1usize..=16,
        rows in prop::collection::vec(prop::collection::vec(0u8..=1, 16), 1..300),
        gaussian in any::<bool>(),
    ) {
        let mut src = NoiseSource::off();
        let noise = if gaussian {
            HistogramNoise::Gaussian { eps: 1.0, delta: 1e-6 }
        } else {
            HistogramNoise::Laplace { eps: 1.0 }
        };
        let mut h = HistogramMechanism::new(d, Horizon::Unknown, noise, NoiseMode::Off).unwrap();
        let mut sums = vec![0.0; d];
        for row in rows {
            let row: Vec<f64> = row[..d].iter().map(|&b| b as f64).collect();
            h.insert(&row, &mut src).unwrap();
            for (s, x) in sums.iter_mut().zip(&row) {
                *s += x;
            }
            prop_assert_eq!(h.query().unwrap(), sums.clone());
        }
    }

    #[test]
    fn range_store_matches_set(
        u in 1u64..=64,
        ops in prop::collection::vec((1u64..=64, any::<bool>()), 1..128),
        known in any::<bool>(),
    ) {
        let mut store = RangeCountStore::new(u, horizon(known, ops.len()), 1.0, 0.1, &mut NoiseSource::off()).unwrap();
        let mut set = vec![false; u as usize + 1];
        for (x, ins) in ops {
            let x = (x - 1) % u + 1;
            let op = if ins { RangeOp::Insert } else { RangeOp::Delete };
            store.range_insert(x, op).unwrap();
            set[x as usize] = ins;
            let a = 1 + x / 3;
            for b in a.min(u)..=u {
                let a = a.min(b);
                let want = set[a as usize..=b as usize].iter().filter(|p| **p).count() as f64;
                prop_assert_eq!(store.range_query(a, b).unwrap(), want);
            }
        }
    }
}

#[test]
fn range_store_exhaustive_small() {
    let u = 16u64;
    let ops: Vec<(u64, bool)> = (0..48u64).map(|i| ((i * 7) % u + 1, i % 5 != 3)).collect();
    for h in [Horizon::Known(48), Horizon::Unknown] {
        let mut store = RangeCountStore::new(u, h, 1.0, 0.1, &mut NoiseSource::off()).unwrap();
        let mut set = vec![false; u as usize + 1];
        for &(x, ins) in &ops {
            store
                .range_insert(
                    x,
                    if ins {
                        RangeOp::Insert
                    } else {
                        RangeOp::Delete
                    },
                )
                .unwrap();
            set[x as usize] = ins;
            for a in 1..=u {
                for b in a..=u {
                    let want = set[a as usize..=b as usize].iter().filter(|p| **p).count() as f64;
                    assert_eq!(store.range_query(a, b).unwrap(), want);
                }
            }
        }
    }
}
