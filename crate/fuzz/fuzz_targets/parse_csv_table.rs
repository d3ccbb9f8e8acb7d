#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // errors are fine; a table that parses must be rectangular and finite
    if let Ok(table) = extrema_dp::io::parse_csv_table(text) {
        assert_eq!(table.data.ncols(), table.ncols());
        assert!(table.data.iter().all(|v| v.is_finite()));
    }
});
