//! Randomized torture of the two on-disk formats, through the same encode
//! and decode entry points the binary uses. The unit tests pin exact byte
//! layouts at one fixed shape; here the shapes, path counts, scales, and
//! corruption sites vary freely.

use lb2_cli::container::{decode_layer, decode_matrix, encode_layer, encode_matrix, MatrixDtype};
use lb2_core::factorize::TriScale;
use lb2_core::ndarray::{Array1, Array2};
use lb2_core::quantize::{binarize, decompress, CompressedLayer, Method, Provenance, QuantizedPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Positive scales spread over twelve decades, far past what f32 storage
/// keeps exactly.
fn scales(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| 10f64.powf(rng.random_range(-6.0..6.0)))
}

fn random_layer(rng: &mut ChaCha8Rng) -> CompressedLayer {
    let d_out = rng.random_range(1..=40);
    let d_in = rng.random_range(1..=40);
    let rank = rng.random_range(1..=d_out.min(d_in));
    let n_paths = rng.random_range(1..=2);
    let paths = (0..n_paths)
        .map(|_| {
            let u = binarize(gaussian(d_out, rank, rng).view());
            let v = binarize(gaussian(d_in, rank, rng).view());
            let tri =
                TriScale::new(scales(d_out, rng), scales(rank, rng), scales(d_in, rng)).unwrap();
            QuantizedPath::new(u, v, tri).unwrap()
        })
        .collect();
    let method = match rng.random_range(0..3u8) {
        0 => Method::Standard,
        1 => Method::RandomRotation,
        _ => Method::JointItq,
    };
    let provenance = Provenance { seed: rng.random(), iterations: rng.random_range(0..200) };
    CompressedLayer::new(paths, method, provenance).unwrap()
}

#[test]
fn random_layers_reencode_byte_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1b2c);
    for case in 0..100 {
        let layer = random_layer(&mut rng);
        let bytes = encode_layer(&layer);
        let stored = decode_layer(&bytes).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert_eq!(stored.d_out(), layer.d_out(), "case {case}");
        assert_eq!(stored.d_in(), layer.d_in(), "case {case}");
        assert_eq!(stored.rank(), layer.rank(), "case {case}");
        assert_eq!(stored.method(), layer.method(), "case {case}");
        assert_eq!(stored.provenance(), layer.provenance(), "case {case}");
        assert_eq!(bytes, encode_layer(&stored), "case {case}: re-encode changed bytes");
        // The first decode narrowed the scales to f32 grid points; from
        // there every further round trip is the identity.
        assert_eq!(stored, decode_layer(&encode_layer(&stored)).unwrap(), "case {case}");
        assert!(decompress(&stored).iter().all(|x| x.is_finite()), "case {case}");
    }
}

#[test]
fn random_matrices_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1b2d);
    for case in 0..100 {
        let rows = rng.random_range(1..=50);
        let cols = rng.random_range(1..=50);
        let m = gaussian(rows, cols, &mut rng).mapv(|x| x * 1e3);

        // f64 payloads come back bit for bit.
        let bytes = encode_matrix(&m, MatrixDtype::F64);
        let (back, dtype) = decode_matrix(&bytes).unwrap();
        assert_eq!(dtype, MatrixDtype::F64, "case {case}");
        assert_eq!(back, m, "case {case}: f64 payload changed");

        // f32 payloads lose precision exactly once, then hold steady.
        let narrow = encode_matrix(&m, MatrixDtype::F32);
        let (once, dtype) = decode_matrix(&narrow).unwrap();
        assert_eq!(dtype, MatrixDtype::F32, "case {case}");
        assert_eq!(narrow, encode_matrix(&once, MatrixDtype::F32), "case {case}");
    }
}

#[test]
fn random_byte_flips_never_decode() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1b2e);
    let layer_bytes = encode_layer(&random_layer(&mut rng));
    let matrix_bytes = encode_matrix(&gaussian(13, 7, &mut rng), MatrixDtype::F32);
    for _ in 0..200 {
        let mut bytes = if rng.random() { layer_bytes.clone() } else { matrix_bytes.clone() };
        let pos = rng.random_range(0..bytes.len());
        let mask = 1u8 << rng.random_range(0..8);
        bytes[pos] ^= mask;
        let layerish = bytes.starts_with(b"LB2C");
        let survived = if layerish {
            decode_layer(&bytes).is_ok()
        } else {
            decode_matrix(&bytes).is_ok()
        };
        assert!(!survived, "flip of bit {mask:#04x} at byte {pos} went unnoticed");
    }
}

#[test]
fn every_proper_prefix_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1b2f);
    let layer_bytes = encode_layer(&random_layer(&mut rng));
    for len in 0..layer_bytes.len() {
        assert!(
            decode_layer(&layer_bytes[..len]).is_err(),
            "truncation to {len} of {} bytes decoded",
            layer_bytes.len()
        );
    }
    let matrix_bytes = encode_matrix(&gaussian(9, 21, &mut rng), MatrixDtype::F64);
    for len in 0..matrix_bytes.len() {
        assert!(
            decode_matrix(&matrix_bytes[..len]).is_err(),
            "truncation to {len} of {} bytes decoded",
            matrix_bytes.len()
        );
    }
}
