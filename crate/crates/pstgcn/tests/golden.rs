//! Frozen forward-pass output of a fixed one-layer model on a fixed
//! input, guarding against silent numerical drift in any op.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pstgcn::graph::{build_partitions, SkeletonTopology};
use pstgcn::net::{AttentionMode, LayerSpec, STGCNModel};
use pstgcn::tensor::Tensor;

#[test]
fn one_layer_forward_matches_frozen_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let topo = SkeletonTopology::preset("toy11").unwrap();
    let adj = build_partitions(&topo).unwrap();
    let model = STGCNModel::new(
        adj,
        "toy11",
        3,
        4,
        &[LayerSpec {
            channels: 6,
            kernel: 3,
            stride: 1,
            attention: AttentionMode::Additive,
        }],
        true,
        &mut rng,
    )
    .unwrap();
    let n = 2 * 3 * 8 * 11;
    let x = Tensor::from_vec(
        &[2, 3, 8, 11],
        (0..n).map(|i| ((i as f64) * 0.37).sin()).collect(),
    )
    .unwrap();
    let y = model.forward_eval(&x).unwrap();
    let expected = [
        -6.06041004551548479e0,
        -3.70781226726066171e0,
        5.53565673817395854e-1,
        -1.66122284450710822e0,
        -8.01569837240748306e0,
        -4.24769302374537983e0,
        2.15464115980704385e0,
        -2.05679005644969104e0,
    ];
    assert_eq!(y.shape(), &[2, 4]);
    for (got, want) in y.data().iter().zip(expected) {
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "logit drift: got {got:.17e}, frozen {want:.17e}"
        );
    }
}
