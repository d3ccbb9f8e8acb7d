#![no_main]

use extrema_dp::{emit_plot_data, ExperimentReport, PlotAxis};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(report) = ExperimentReport::from_csv(text) else {
        return;
    };
    let csv = report.to_csv().expect("a parsed report has rows");
    let again = ExperimentReport::from_csv(&csv).expect("written report parses");
    assert_eq!(again.rows.len(), report.rows.len());
    for axis in [PlotAxis::Epsilon, PlotAxis::K, PlotAxis::R] {
        let _ = emit_plot_data(&report, axis);
    }
});
