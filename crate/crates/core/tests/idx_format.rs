use leapfactual::data::idx::{encode_images, encode_labels, parse_idx, read_idx_file, write_idx_file, IdxData, IdxImages};
use leapfactual::Error;
use proptest::prelude::*;

fn images() -> impl Strategy<Value = IdxImages> {
    (0usize..6, 1usize..6, 1usize..6).prop_flat_map(|(n, rows, cols)| {
        prop::collection::vec(any::<u8>(), n * rows * cols).prop_map(move |pixels| IdxImages { rows, cols, pixels })
    })
}

fn parse_offset(bytes: &[u8]) -> usize {
    match parse_idx(bytes) {
        Err(Error::Parse { offset, .. }) => offset,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

proptest! {
    #[test]
    fn images_roundtrip_bit_exact(img in images()) {
        let bytes = encode_images(&img);
        prop_assert_eq!(parse_idx(&bytes).unwrap(), IdxData::Images(img.clone()));
        if let IdxData::Images(back) = parse_idx(&bytes).unwrap() {
            prop_assert_eq!(encode_images(&back), bytes);
        }
    }

    #[test]
    fn labels_roundtrip_bit_exact(labels in prop::collection::vec(0u8..10, 0..64)) {
        let bytes = encode_labels(&labels);
        prop_assert_eq!(parse_idx(&bytes).unwrap(), IdxData::Labels(labels));
    }

    #[test]
    fn truncation_is_rejected_at_end_of_stream(img in images(), cut in 1usize..8) {
        let bytes = encode_images(&img);
        let keep = bytes.len().saturating_sub(cut);
        let off = parse_offset(&bytes[..keep]);
        prop_assert_eq!(off, keep);
    }
}

#[test]
fn malformed_streams_report_offsets() {
    let mut bad_magic = encode_labels(&[1, 2]);
    bad_magic[3] = 0x05;
    assert_eq!(parse_offset(&bad_magic), 0);

    let mut overlong = encode_labels(&[1, 2]);
    overlong.push(0);
    assert_eq!(parse_offset(&overlong), 10);

    assert_eq!(parse_offset(&encode_labels(&[1, 2, 200])), 10);
}

#[test]
fn gzip_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let img = IdxImages {
        rows: 2,
        cols: 3,
        pixels: (0..12).collect(),
    };
    for name in ["a.idx", "a.idx.gz"] {
        let path = dir.path().join(name);
        write_idx_file(&path, &encode_images(&img)).unwrap();
        assert_eq!(read_idx_file(&path).unwrap(), IdxData::Images(img.clone()));
    }
}
