use std::path::PathBuf;

use proptest::prelude::*;
use vision::contour::{approximate_contours, binarize};
use vision::features::{contour_nodes, image_to_spn};
use vision::idx::{load_mnist, Split};

const W: usize = 16;

fn shifted(px: &[u8], dx: usize, dy: usize, w: usize) -> Vec<u8> {
    let mut out = vec![0u8; w * w];
    for y in 0..W {
        for x in 0..W {
            out[(y + dy) * w + x + dx] = px[y * W + x];
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Shifting the image by whole pixels shifts every node and keeps
    /// types and edges.
    #[test]
    fn translation_equivariance(px in proptest::collection::vec(prop_oneof![Just(0u8), Just(255u8)], W * W), dx in 0usize..5, dy in 0usize..5) {
        let a = image_to_spn(&px, W, W);
        let big = W + 5;
        let b = image_to_spn(&shifted(&px, dx, dy, big), big, big);
        prop_assert_eq!(a.nodes.len(), b.nodes.len());
        for (id, n) in &a.nodes {
            let m = &b.nodes[id];
            prop_assert_eq!(n.ty, m.ty);
            prop_assert_eq!([n.pos[0] + dx as f64, n.pos[1] + dy as f64], m.pos);
        }
        prop_assert_eq!(&a.edges, &b.edges);
    }

    #[test]
    fn extraction_is_deterministic(px in proptest::collection::vec(any::<u8>(), W * W)) {
        prop_assert_eq!(image_to_spn(&px, W, W), image_to_spn(&px, W, W));
    }

    /// Contour relations are a subset of the all-pairs relations, and
    /// every node sits on a polygon vertex.
    #[test]
    fn structural_invariants(px in proptest::collection::vec(prop_oneof![Just(0u8), Just(255u8)], W * W)) {
        let s = image_to_spn(&px, W, W);
        prop_assert!(s.validate().is_ok());
        prop_assert!(s.edges[0].is_subset(&s.edges[6]));
        prop_assert!(s.edges[1].is_subset(&s.edges[7]));
        for k in 2..6 {
            prop_assert!(s.edges[k].is_subset(&s.edges[6 + k % 2]));
        }
        let img = binarize(&px, W, W, 0.5);
        let cs = approximate_contours(&img, 0.01);
        for n in contour_nodes(&cs) {
            prop_assert!(cs[n.contour].points.contains(&n.pos));
        }
    }
}

fn data_dir() -> PathBuf {
    std::env::var_os("MNR_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

#[test]
fn mnist_headers_when_present() {
    let dir = data_dir();
    match load_mnist(&dir, Split::Test) {
        Ok(set) => {
            assert_eq!((set.rows, set.cols), (28, 28));
            assert_eq!(set.labels.len(), set.len());
            assert!(set.len() > 0);
            let s = image_to_spn(&set.images[0], 28, 28);
            assert!(!s.nodes.is_empty());
        }
        Err(e) => eprintln!("skipping: {e}"),
    }
}
