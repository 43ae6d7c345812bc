//! Round trips through the binary and text formats.

use proptest::prelude::*;
use tokenmetric::token_io::{
    read_features, read_tokens, read_tokens_text, write_features, write_tokens, write_tokens_text, Codebook,
    FeatureSet, GridLayout, TokenDataset,
};

fn dataset() -> impl Strategy<Value = TokenDataset> {
    (2u32..5000, 1u32..6, 1u32..6, 0usize..20, any::<bool>()).prop_flat_map(|(k, r, c, n, grid)| {
        let len = (r * c) as usize;
        prop::collection::vec(0..k, n * len).prop_map(move |ids| {
            let layout = grid.then(|| GridLayout::new(r, c).unwrap());
            TokenDataset::from_flat(Codebook::new(k).unwrap(), len, layout, ids).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn binary_round_trip(ds in dataset()) {
        let mut buf = Vec::new();
        let n = write_tokens(&ds, &mut buf).unwrap();
        prop_assert_eq!(n as usize, buf.len());
        prop_assert_eq!(buf.len(), 29 + 4 * ds.flat_ids().len());
        prop_assert_eq!(read_tokens(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn text_round_trip_is_bit_identical_in_binary(ds in dataset()) {
        let mut text = Vec::new();
        write_tokens_text(&ds, &mut text).unwrap();
        let back = read_tokens_text(&text[..]).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_tokens(&ds, &mut a).unwrap();
        write_tokens(&back, &mut b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn feature_round_trip(dim in 1usize..8, rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 8), 0..50)) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r[..dim].to_vec()).collect();
        let fs = FeatureSet::from_rows(dim, &rows).unwrap();
        let mut buf = Vec::new();
        write_features(&fs, &mut buf).unwrap();
        let back = read_features(&buf[..]).unwrap();
        prop_assert!(back.flat().iter().zip(fs.flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back.dim(), dim);
        prop_assert_eq!(back.len(), rows.len());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        let mut tagged = b"CHTK\x01".to_vec();
        tagged.extend_from_slice(&bytes);
        for input in [&bytes[..], &tagged[..]] {
            if let Ok(ds) = read_tokens(input) {
                prop_assert!(ds.flat_ids().iter().all(|&t| t < ds.codebook().size()));
            }
        }
    }
}
