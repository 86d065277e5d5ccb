use oraldx_core::fusion::{
    fuse_case, load_bundle, save_bundle, BundleError, Bundled, CaseFuser, CollapsedFusion, EncoderBackend,
    FusionWeights, HashBackend, Vector, EMBED_DIM, GLM_DIM, IMAGE_DIM, TEXT_DIM,
};
use oraldx_core::reasoning::{HierarchyModel, LEVEL_ARITY};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    Vector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn fusion_maps_and_heads_have_the_documented_shapes() {
    let w = FusionWeights::seeded(0);
    let dims: Vec<(usize, usize)> = w.maps().iter().map(|m| (m.in_dim(), m.out_dim())).collect();
    assert_eq!(
        dims,
        vec![
            (1280, 1024),
            (1024, 1024),
            (4096, 1024),
            (2048, 1024),
            (2048, 1024)
        ]
    );
    assert_eq!(
        (IMAGE_DIM, TEXT_DIM, GLM_DIM, EMBED_DIM),
        (1280, 1024, 4096, 1024)
    );

    let model = HierarchyModel::seeded(0, 1.0);
    let outs: Vec<usize> = model.heads().iter().map(|h| h.out_dim()).collect();
    assert_eq!(outs, vec![2, 8, 8, 10, 118, 118]);
    assert_eq!(outs, LEVEL_ARITY.to_vec());
    assert!(model.heads().iter().all(|h| h.in_dim() == EMBED_DIM));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = fuse_case(
        &random(&mut rng, 1280),
        &random(&mut rng, 1024),
        &random(&mut rng, 4096),
        &w,
    )
    .unwrap();
    assert_eq!(out.dim(), 1024);
}

#[test]
fn wrong_input_dimensions_are_rejected() {
    let w = FusionWeights::zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ok = |d| random(&mut ChaCha8Rng::seed_from_u64(d as u64), d);
    assert!(fuse_case(&random(&mut rng, 1279), &ok(1024), &ok(4096), &w).is_err());
    assert!(fuse_case(&ok(1280), &random(&mut rng, 1025), &ok(4096), &w).is_err());
    assert!(fuse_case(&ok(1280), &ok(1024), &random(&mut rng, 10), &w).is_err());
    assert!(Vector::new(vec![f64::NAN]).is_err());
    assert!(Vector::new(vec![]).is_err());
}

#[test]
fn collapsed_fusion_agrees_with_the_staged_stack() {
    let w = FusionWeights::seeded(3);
    let collapsed = CollapsedFusion::new(&w);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let (i, t, g) = (
            random(&mut rng, 1280),
            random(&mut rng, 1024),
            random(&mut rng, 4096),
        );
        let a = fuse_case(&i, &t, &g, &w).unwrap();
        let b = collapsed.fuse(&i, &t, &g).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn bundles_round_trip_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let w = FusionWeights::seeded(5);
    let path = dir.path().join("fusion.odxw");
    save_bundle(&w, &path).unwrap();
    let back: FusionWeights = load_bundle(&path).unwrap();
    for (a, b) in w.maps().iter().zip(back.maps()) {
        let bits = |m: &oraldx_core::fusion::AffineMap| {
            m.weights()
                .iter()
                .chain(m.bias())
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(a), bits(b));
    }
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());

    let model = HierarchyModel::seeded(6, 2.0);
    let bytes = model.to_bytes();
    assert_eq!(HierarchyModel::from_bytes(&bytes).unwrap(), model);
    assert!(matches!(
        FusionWeights::from_bytes(&bytes),
        Err(BundleError::Kind { .. })
    ));
}

#[test]
fn corrupt_bundles_are_rejected() {
    let model = HierarchyModel::seeded(7, 1.0);
    let bytes = model.to_bytes();
    assert!(HierarchyModel::from_bytes(b"nonsense").is_err());
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 1;
    assert!(HierarchyModel::from_bytes(&flipped).is_err());
    assert!(HierarchyModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(HierarchyModel::from_bytes(&extra).is_err());
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(
        HierarchyModel::from_bytes(&magic),
        Err(BundleError::Magic)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn hash_backend_is_deterministic(text in "[a-z ]{1,40}", seed in any::<u64>()) {
        prop_assume!(text.split_whitespace().next().is_some());
        let b = HashBackend::new(seed);
        let x = b.encode_text(&text).unwrap();
        prop_assert_eq!(x.dim(), 1024);
        prop_assert_eq!(&x, &b.encode_text(&text).unwrap());
        prop_assert_eq!(b.encode_glm(&text).unwrap().dim(), 4096);
    }
}
