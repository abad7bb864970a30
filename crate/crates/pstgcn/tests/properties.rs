//! Randomized property tests for the graph, ops and fusion invariants.

use proptest::prelude::*;

use pstgcn::data::{generate_synthetic, SplitTag};
use pstgcn::graph::{bone_features, build_partitions, normalize_adjacency, SkeletonSequence, SkeletonTopology};
use pstgcn::ops;
use pstgcn::tensor::Tensor;
use pstgcn::train::two_stream_fuse;

/// Random connected graph: a spanning tree over `v` joints plus a few
/// extra edges, encoded as choice seeds so proptest can shrink it.
fn arb_topology() -> impl Strategy<Value = SkeletonTopology> {
    (2usize..=25, any::<u64>()).prop_map(|(v, seed)| {
        let mut state = seed;
        let mut next = |bound: usize| {
            // xorshift-style splitter is enough for structural variety
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % bound.max(1) as u64) as usize
        };
        let mut edges: Vec<(usize, usize)> = (1..v).map(|j| (j, next(j))).collect();
        for _ in 0..next(v) {
            let a = next(v);
            let b = next(v);
            if a != b && !edges.contains(&(a, b)) && !edges.contains(&(b, a)) {
                edges.push((a, b));
            }
        }
        let center = next(v);
        SkeletonTopology::new("prop", v, edges, center, None).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_adjacency_of_symmetric_input_is_symmetric(topo in arb_topology()) {
        let v = topo.joint_count;
        let mut a = Tensor::zeros(&[v, v]);
        for &(i, j) in &topo.edges {
            let (x, y) = (a.idx2(i, j), a.idx2(j, i));
            a.data_mut()[x] = 1.0;
            a.data_mut()[y] = 1.0;
        }
        let n = normalize_adjacency(&a, 0.001).unwrap();
        for i in 0..v {
            for j in 0..v {
                prop_assert!((n.data()[n.idx2(i, j)] - n.data()[n.idx2(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partitions_cover_each_connection_exactly_once(topo in arb_topology()) {
        let v = topo.joint_count;
        let adj = build_partitions(&topo).unwrap();
        for i in 0..v {
            for j in 0..v {
                let members = (0..3)
                    .filter(|&p| adj.raw[p].data()[adj.raw[p].idx2(i, j)] != 0.0)
                    .count();
                let connected = i == j
                    || topo.edges.contains(&(i, j))
                    || topo.edges.contains(&(j, i));
                prop_assert_eq!(members, usize::from(connected));
            }
        }
    }

    #[test]
    fn bone_features_are_linear_in_coordinates(
        scale in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let topo = SkeletonTopology::preset("toy11").unwrap();
        let ds = generate_synthetic(2, 1, &topo, 4, 0.1, seed).unwrap();
        let s = &ds.samples[0];
        let bones = bone_features(s, &topo).unwrap();
        let mut scaled = s.data.clone();
        scaled.scale(scale);
        let scaled_seq = SkeletonSequence::new(scaled, s.label, "toy11").unwrap();
        let scaled_bones = bone_features(&scaled_seq, &topo).unwrap();
        for (a, b) in bones.data.data().iter().zip(scaled_bones.data.data()) {
            prop_assert!((a * scale - b).abs() < 1e-9);
        }
    }

    #[test]
    fn conv2d_is_linear_in_the_input(
        vals in proptest::collection::vec(-2.0f64..2.0, 2 * 6 * 3),
        alpha in -2.0f64..2.0,
    ) {
        let x = Tensor::from_vec(&[1, 2, 6, 3], vals).unwrap();
        let mut k = Tensor::zeros(&[2, 2, 3, 1]);
        for (i, w) in k.data_mut().iter_mut().enumerate() {
            *w = 0.1 * i as f64 - 0.5;
        }
        let y = ops::conv2d(&x, &k, 1, 1).unwrap();
        let mut xs = x.clone();
        xs.scale(alpha);
        let ys = ops::conv2d(&xs, &k, 1, 1).unwrap();
        for (a, b) in y.data().iter().zip(ys.data()) {
            prop_assert!((a * alpha - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fusion_ignores_constant_row_shifts(
        rows in proptest::collection::vec(
            (proptest::collection::vec(0.0f64..1.0, 4), proptest::collection::vec(0.0f64..1.0, 4)),
            1..6,
        ),
        shift in -5.0f64..5.0,
    ) {
        let n = rows.len();
        let a = Tensor::from_vec(&[n, 4], rows.iter().flat_map(|(r, _)| r.clone()).collect()).unwrap();
        let b = Tensor::from_vec(&[n, 4], rows.iter().flat_map(|(_, r)| r.clone()).collect()).unwrap();
        let base = two_stream_fuse(&a, &b).unwrap();
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.data_mut().iter_mut().for_each(|x| *x += shift);
        b2.data_mut().iter_mut().for_each(|x| *x -= 0.5 * shift);
        prop_assert_eq!(base, two_stream_fuse(&a2, &b2).unwrap());
    }

    #[test]
    fn stratified_split_never_leaks(seed in any::<u64>(), frac in 0.1f64..0.9) {
        let topo = SkeletonTopology::preset("toy11").unwrap();
        let mut ds = generate_synthetic(3, 6, &topo, 4, 0.0, 5).unwrap();
        ds.stratified_split(frac, seed).unwrap();
        let train = ds.indices(SplitTag::Train);
        let val = ds.indices(SplitTag::Val);
        for i in &train {
            prop_assert!(!val.contains(i));
        }
        prop_assert_eq!(train.len() + val.len(), ds.samples.len());
    }
}
