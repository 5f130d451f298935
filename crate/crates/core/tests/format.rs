use qnmt::decoder::{translate_corpus, DecodeConfig};
use qnmt::layers::Precision;
use qnmt::model::{generate_model, load_model, read_model, save_model, write_model};
use qnmt::Error;

fn bytes(seed: u64) -> Vec<u8> {
    let mut out = Vec::new();
    write_model(&generate_model(40, 50, 8, 6, seed).unwrap(), &mut out).unwrap();
    out
}

#[test]
fn same_seed_same_bytes() {
    assert_eq!(bytes(17), bytes(17));
    assert_ne!(bytes(17), bytes(18));
}

#[test]
fn file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.qnmt");
    let params = generate_model(40, 50, 8, 6, 3).unwrap();
    save_model(&params, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, params);
    for ((_, _, a), (_, _, b)) in params.tensors().iter().zip(back.tensors().iter()) {
        let x: Vec<u32> = a.as_slice().iter().map(|v| v.to_bits()).collect();
        let y: Vec<u32> = b.as_slice().iter().map(|v| v.to_bits()).collect();
        assert_eq!(x, y);
    }
    assert_eq!(std::fs::read(&path).unwrap(), bytes(3));
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(load_model("/nonexistent/model.qnmt"), Err(Error::Io { .. })));
}

#[test]
fn every_truncation_is_rejected() {
    let b = bytes(1);
    for cut in (0..b.len()).step_by(97).chain([b.len() - 1]) {
        assert!(read_model(&b[..cut]).is_err(), "cut at {cut}");
    }
}

#[test]
fn payload_flip_fails_checksum() {
    let mut b = bytes(1);
    let i = b.len() - 20;
    b[i] ^= 1;
    match read_model(&b) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, b.len() - 8),
        other => panic!("{other:?}"),
    }
}

#[test]
fn translations_reproduce_from_reloaded_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.qnmt");
    let params = generate_model(60, 60, 8, 8, 5).unwrap();
    save_model(&params, &path).unwrap();
    let sentences: Vec<Vec<u32>> = (0..6).map(|i| (0..4 + i).map(|t| (3 + 7 * t + i) as u32 % 60).collect()).collect();
    for precision in [Precision::Fp32, Precision::Int8] {
        let cfg = DecodeConfig {
            precision,
            ..Default::default()
        };
        let a = params.network(precision).unwrap();
        let b = load_model(&path).unwrap().network(precision).unwrap();
        let x: Vec<_> = translate_corpus(&[&a], &sentences, &cfg, 1).into_iter().map(Result::unwrap).collect();
        let y: Vec<_> = translate_corpus(&[&b], &sentences, &cfg, 2).into_iter().map(Result::unwrap).collect();
        assert_eq!(x, y);
    }
}
