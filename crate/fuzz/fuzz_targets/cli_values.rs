#![no_main]

use extrema_dp::harness::MethodSpec;
use extrema_dp::{Epsilon, PlotAxis, Tuning};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(eps) = s.parse::<Epsilon>() {
        assert!(eps.value() > 0.0);
    }
    if let Ok(Tuning::R(r)) = s.parse::<Tuning>() {
        assert!(r > 0.0 && r <= 0.5);
    }
    // Display and FromStr must agree on every method that parses
    if let Ok(m) = s.parse::<MethodSpec>() {
        assert_eq!(m.to_string().parse::<MethodSpec>().unwrap(), m);
    }
    let _ = s.parse::<PlotAxis>();
});
