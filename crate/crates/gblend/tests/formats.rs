use gblend::formats::*;
use gblend::GblendError;
use gblend_core::rng::Rng;
use gblend_core::signal::{fit_normalization, stft_log, RawEpoch, TfImage, EPOCH_SAMPLES};
use proptest::prelude::*;

fn epochs(n: usize, channels: usize, seed: u64) -> RawSignals {
    let mut rng = Rng::seeded(seed);
    let epochs = (0..n)
        .map(|_| RawEpoch::unlabeled((0..EPOCH_SAMPLES * channels).map(|_| rng.normal() as f32 as f64).collect(), channels).unwrap())
        .collect();
    let labels = (0..n).map(|_| rng.below(5) as u8).collect();
    RawSignals { epochs, labels }
}

fn is_format_error(r: Result<RawSignals, GblendError>, needle: &str) -> bool {
    matches!(r, Err(GblendError::Format { ref msg, .. }) if msg.contains(needle))
}

#[test]
fn two_epoch_file_round_trips() {
    let s = epochs(2, 1, 0);
    let back = decode_raw_signals(&encode_raw_signals(&s).unwrap()).unwrap();
    assert_eq!(back.epochs.len(), 2);
    assert_eq!(back.epochs[0].samples().len(), 3000);
    assert_eq!(back.epochs[0].channels(), 1);
    assert_eq!(back, s);
}

#[test]
fn byte_layout() {
    let mut s = epochs(1, 2, 1);
    s.labels = vec![3];
    let bytes = encode_raw_signals(&s).unwrap();
    let header = b"GBLEND1 1 2 100\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 3000 * 2 * 4 + 1);
    let second = f32::from_le_bytes(bytes[header.len() + 4..header.len() + 8].try_into().unwrap());
    assert_eq!(second as f64, s.epochs[0].samples()[1]);
    assert_eq!(*bytes.last().unwrap(), 3);
}

#[test]
fn truncated_payload_is_rejected() {
    let bytes = encode_raw_signals(&epochs(2, 1, 2)).unwrap();
    assert!(is_format_error(decode_raw_signals(&bytes[..bytes.len() - 5]), "truncated"));
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(is_format_error(decode_raw_signals(&longer), "trailing"));
}

#[test]
fn bad_label_is_rejected() {
    let mut bytes = encode_raw_signals(&epochs(3, 1, 3)).unwrap();
    let n = bytes.len();
    bytes[n - 2] = 5;
    assert!(is_format_error(decode_raw_signals(&bytes), "label 5 of epoch 1"));
}

#[test]
fn other_rates_and_headers_are_rejected() {
    let bytes = encode_raw_signals(&epochs(1, 1, 4)).unwrap();
    let body = &bytes[b"GBLEND1 1 1 100\n".len()..];
    let with = |h: &str| [h.as_bytes(), body].concat();
    assert!(is_format_error(decode_raw_signals(&with("GBLEND1 1 1 128\n")), "sample rate"));
    assert!(is_format_error(decode_raw_signals(&with("GBLEND2 1 1 100\n")), "magic"));
    assert!(is_format_error(decode_raw_signals(&with("GBLEND1 1 1\n")), "3 fields"));
    assert!(is_format_error(decode_raw_signals(&with("GBLEND1 one 1 100\n")), "not a count"));
    assert!(is_format_error(decode_raw_signals(&with("GBLEND1 1 4 100\n")), "channels"));
    assert!(is_format_error(decode_raw_signals(body), "header"));
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.gbs");
    let s = epochs(2, 3, 5);
    write_raw_signals(&path, &s).unwrap();
    assert_eq!(load_raw_signals(&path).unwrap(), s);
    match load_raw_signals(&dir.path().join("missing.gbs")) {
        Err(GblendError::Io { path, .. }) => assert!(path.ends_with("missing.gbs")),
        other => panic!("expected an IO error, got {other:?}"),
    }
}

#[test]
fn images_and_stats_round_trip_bitwise() {
    let s = epochs(3, 2, 6);
    let images: Vec<TfImage> = s.epochs.iter().map(|e| stft_log(e).unwrap()).collect();
    assert_eq!(decode_tf_images(&encode_tf_images(&images).unwrap()).unwrap(), images);
    let stats = fit_normalization(&images).unwrap();
    assert_eq!(decode_stats(&encode_stats(&stats)).unwrap(), stats);

    let bytes = encode_tf_images(&images).unwrap();
    assert!(decode_tf_images(&bytes[..bytes.len() - 1]).is_err());
    let sb = encode_stats(&stats);
    assert!(decode_stats(&sb[..sb.len() - 8]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_recording_round_trips(n in 0usize..4, channels in 1usize..=3, seed in any::<u64>()) {
        let s = epochs(n, channels, seed);
        prop_assert_eq!(decode_raw_signals(&encode_raw_signals(&s).unwrap()).unwrap(), s);
    }
}
