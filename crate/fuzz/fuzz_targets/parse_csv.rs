#![no_main]

use gem_core::{Dataset, Error};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    match Dataset::from_csv_reader(data) {
        Ok(d) => {
            assert!(d.n() >= 1 && d.p() >= 1);
            assert!(d.y().iter().chain(d.x().iter()).all(|v| v.is_finite()));
            let mut buf = Vec::new();
            d.write_csv(&mut buf).unwrap();
            let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
            assert_eq!((back.n(), back.p()), (d.n(), d.p()));
            let _ = d.standardize();
        }
        Err(Error::ParseError { .. } | Error::RaggedRow { .. } | Error::EmptyData | Error::DimensionMismatch { .. }) => {}
        Err(e) => panic!("unexpected error kind: {e:?}"),
    }
});
