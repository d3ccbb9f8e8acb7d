#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&dim, rest)) = data.split_first() else {
        return;
    };
    let Ok(spec) = std::str::from_utf8(rest) else {
        return;
    };
    let dim = usize::from(dim % 16);
    if let Ok(bounds) = extrema_dp::io::parse_bounds(spec, dim) {
        assert_eq!(bounds.dim(), dim);
        for (lo, hi) in bounds.lower().iter().zip(bounds.upper()) {
            assert!(lo <= hi);
        }
    }
});
