use std::path::Path;

use nvsim::formats::*;
use nvsim::sig9;
use nvsim_core::simulator::{ChargeState, Frame, NvOutcome, ShotRecord, SpinState};
use proptest::prelude::*;

fn outcome_strategy() -> impl Strategy<Value = NvOutcome> {
    (-50.0..400.0f64, any::<bool>(), any::<bool>(), 0u8..3, any::<bool>()).prop_map(|(counts, bit, nvm, spin, reset)| {
        NvOutcome {
            counts,
            charge_bit: bit,
            true_charge: if nvm { ChargeState::Nvm } else { ChargeState::Nv0 },
            spin_prep: [None, Some(SpinState::Ms0), Some(SpinState::Ms1)][spin as usize],
            spin_reset: reset,
        }
    })
}

fn records_strategy() -> impl Strategy<Value = Vec<ShotRecord>> {
    (1usize..6, 0usize..20).prop_flat_map(|(n, shots)| {
        prop::collection::vec((prop::option::of(any::<bool>()), prop::collection::vec(outcome_strategy(), n)), shots)
            .prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (random_pi, nvs))| ShotRecord { shot_index: i as u64, seed: 7, sequence_hash: 11, random_pi, nvs })
                    .collect()
            })
    })
}

proptest! {
    #[test]
    fn binary_round_trip(records in records_strategy()) {
        let n = records.first().map_or(1, |r| r.nvs.len());
        let header = ShotsHeader { n_nvs: n as u32, n_shots: records.len() as u64, seed: 7, sequence_hash: 11, config_hash: [3; 32] };
        let mut bytes = header.encode();
        encode_shots_binary(&records, &mut bytes);
        let (h, back) = decode_shots_binary(&bytes, Path::new("t.bin")).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(back, records);
    }

    #[test]
    fn csv_round_trip(records in records_strategy()) {
        let n = records.first().map_or(1, |r| r.nvs.len());
        let mut bytes = shots_csv_header(n, 7, "abc").into_bytes();
        encode_shots_csv(&records, &mut bytes);
        let (seed, back) = decode_shots_csv(std::str::from_utf8(&bytes).unwrap(), Path::new("t.csv")).unwrap();
        prop_assert_eq!(seed, 7);
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(&a.nvs, &b.nvs);
            prop_assert_eq!(a.random_pi, b.random_pi);
        }
    }

    #[test]
    fn sig9_keeps_nine_digits(x in -1e12..1e12f64) {
        let y: f64 = sig9(x).parse().unwrap();
        prop_assert!((y - x).abs() <= 5e-9 * x.abs() + 1e-300);
    }

    #[test]
    fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let pixels: Vec<f64> = (0..w * h).map(|i| ((seed.wrapping_mul(i as u64 + 1) >> 40) % 65536) as f64).collect();
        let f = Frame { width: w, height: h, pixels };
        prop_assert_eq!(decode_pgm(&encode_pgm(&f), Path::new("t.pgm")).unwrap(), f);
    }
}

#[test]
fn truncated_binary_is_rejected() {
    let header = ShotsHeader { n_nvs: 2, n_shots: 3, seed: 0, sequence_hash: 0, config_hash: [0; 32] };
    let bytes = header.encode();
    let err = decode_shots_binary(&bytes, Path::new("short.bin")).unwrap_err();
    assert!(err.to_string().contains("short.bin"));
}

#[test]
fn histogram_text_round_trip() {
    let rows = parse_columns("# header\n1.5 3\n2.5\t7\n3.5,0\n", Path::new("h.txt")).unwrap();
    let h = histogram_from_rows(&rows, Path::new("h.txt")).unwrap();
    assert_eq!(h.bin_counts(), &[3, 7, 0]);
    let again = parse_columns(&encode_histogram(&h), Path::new("h2.txt")).unwrap();
    assert_eq!(again, rows);
}

#[test]
fn atomic_write_replaces_whole_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sub").join("x.txt");
    write_atomic(&p, b"first version, longer").unwrap();
    write_atomic(&p, b"second").unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), b"second");
    // no temporaries left behind
    assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
}
