use proptest::prelude::*;

use qicorr::detector::TimestampStream;
use qicorr::tsfile::{TimestampFile, TsFileError, HEADER_LEN, RECORD_LEN};

fn file() -> impl Strategy<Value = TimestampFile> {
    let channel = prop::collection::vec(any::<u64>(), 0..40).prop_map(|mut v| {
        v.sort_unstable();
        v
    });
    (1u32..=u32::MAX, prop::collection::vec(channel, 0..6))
        .prop_map(|(tick_ps, channels)| TimestampFile { tick_ps, channels })
}

proptest! {
    #[test]
    fn round_trip(f in file()) {
        let bytes = f.to_bytes();
        prop_assert_eq!(bytes.len(), HEADER_LEN + RECORD_LEN * f.record_count());
        prop_assert_eq!(TimestampFile::parse(&bytes).unwrap(), f);
    }

    #[test]
    fn write_and_read_through_io(f in file()) {
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        prop_assert_eq!(TimestampFile::read_from(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn truncation_is_reported_at_a_record_boundary(f in file(), cut in 1usize..RECORD_LEN) {
        prop_assume!(f.record_count() > 0);
        let bytes = f.to_bytes();
        let err = TimestampFile::parse(&bytes[..bytes.len() - cut]).unwrap_err();
        match err {
            TsFileError::Format { offset, .. } => {
                prop_assert_eq!(offset, HEADER_LEN + (f.record_count() - 1) * RECORD_LEN)
            }
            other => prop_assert!(false, "unexpected {other}"),
        }
    }
}

#[test]
fn streams_round_trip_through_a_file() {
    let s = TimestampStream::new(vec![3, 9, 9000], 0, 81, 12_000);
    let r = TimestampStream::new(vec![0, 50], 1, 81, 12_000);
    let f = TimestampFile::from_streams(&[&s, &r]).unwrap();
    let back = TimestampFile::parse(&f.to_bytes()).unwrap();
    assert_eq!(back.stream(0, Some(12_000)).unwrap(), s);
    assert_eq!(back.stream(1, Some(12_000)).unwrap(), r);
    assert_eq!(back.stream(0, None).unwrap().duration_ticks, 9001);
    assert!(back.stream(2, None).is_none());
}
