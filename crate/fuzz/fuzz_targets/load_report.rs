#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::report::{load_report, render_report, ReportFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = load_report(data) {
        let json = render_report(&report, ReportFormat::MachineJson);
        assert_eq!(
            load_report(json.as_bytes()).expect("rendered report loads"),
            report
        );
        let _ = render_report(&report, ReportFormat::Markdown);
    }
});
