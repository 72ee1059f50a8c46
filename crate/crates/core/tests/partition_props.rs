use proptest::prelude::*;

use essf::marked_partition::{MarkedPartition, Permutation};

/// Arbitrary labels in `0..n` with a mark per label, zero marks included.
fn marked_partition(max_n: usize) -> impl Strategy<Value = MarkedPartition> {
    (1..=max_n)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(0..n, n),
                proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..5.0], n),
            )
        })
        .prop_map(|(labels, marks)| {
            let mut used: Vec<usize> = labels.clone();
            used.sort_unstable();
            used.dedup();
            let relabel: Vec<usize> = labels
                .iter()
                .map(|l| used.binary_search(l).unwrap())
                .collect();
            let marks: Vec<f64> = used.iter().map(|&l| marks[l]).collect();
            MarkedPartition::from_labels(&relabel, &marks).unwrap()
        })
}

fn permutation(n: usize) -> impl Strategy<Value = Permutation> {
    Just((0..n).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_map(|v| Permutation::new(v).unwrap())
}

fn with_permutation(max_n: usize) -> impl Strategy<Value = (MarkedPartition, Permutation, Permutation)> {
    marked_partition(max_n).prop_flat_map(|x| {
        let n = x.level();
        (Just(x), permutation(n), permutation(n))
    })
}

proptest! {
    #[test]
    fn labels_are_canonical(x in marked_partition(12)) {
        let mut next = 0u32;
        for &k in x.assignment() {
            prop_assert!(k <= next);
            if k == next {
                next += 1;
            }
        }
        prop_assert_eq!(next as usize, x.num_blocks());
        prop_assert_eq!(x.marks().len(), x.num_blocks());
    }

    #[test]
    fn restriction_tower((x, k, m) in marked_partition(12).prop_flat_map(|x| {
        let n = x.level();
        (Just(x), 1..=n).prop_flat_map(|(x, m)| (Just(x), 1..=m, Just(m)))
    })) {
        let direct = x.restrict(k).unwrap();
        let stepwise = x.restrict(m).unwrap().restrict(k).unwrap();
        prop_assert_eq!(direct, stepwise);
    }

    #[test]
    fn restriction_commutes_with_permutations_fixing_a_prefix(
        (x, sigma, m) in marked_partition(10).prop_flat_map(|x| {
            let n = x.level();
            (Just(x), 1..=n).prop_flat_map(move |(x, m)| {
                (Just(x), permutation(m), permutation(n - m), Just(m))
            })
            .prop_map(|(x, head, tail, m)| {
                let mut images = head.images().to_vec();
                images.extend(tail.images().iter().map(|&i| i + m));
                (x, Permutation::new(images).unwrap(), m)
            })
        })
    ) {
        let left = x.apply_permutation(&sigma).unwrap().restrict(m).unwrap();
        let right = x.restrict(m).unwrap().apply_permutation(&sigma.restrict(m).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn permutations_act_by_composition((x, sigma, tau) in with_permutation(10)) {
        let stepwise = x.apply_permutation(&sigma).unwrap().apply_permutation(&tau).unwrap();
        let composed = x.apply_permutation(&sigma.compose(&tau).unwrap()).unwrap();
        prop_assert_eq!(stepwise, composed);
        let identity = x.apply_permutation(&Permutation::identity(x.level())).unwrap();
        prop_assert_eq!(identity, x);
    }

    #[test]
    fn fragmentation_refines((x, parts) in marked_partition(10).prop_flat_map(|x| {
        let n = x.level();
        let k = x.num_blocks();
        (Just(x), proptest::collection::vec(marked_partition(n).prop_filter("level n", move |p| p.level() == n), k))
    })) {
        let y = x.frag(&parts).unwrap();
        prop_assert!(y.is_finer_than(&x));
        for i in 0..x.level() {
            if x.mark_of(i) == 0.0 {
                prop_assert_eq!(y.mark_of(i), 0.0);
            }
        }
        let trivial: Vec<MarkedPartition> = (0..x.num_blocks())
            .map(|_| MarkedPartition::single_block(x.level(), 1.0).unwrap())
            .collect();
        prop_assert_eq!(x.frag(&trivial).unwrap(), x);
    }

    #[test]
    fn frequencies_sum_to_one(x in marked_partition(40)) {
        let f = x.empirical_frequencies();
        let total: f64 = f.pairs.iter().map(|p| p.0).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for w in f.pairs.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn text_round_trip(x in marked_partition(20)) {
        let back: MarkedPartition = x.to_string().parse().unwrap();
        prop_assert_eq!(back, x);
    }
}
