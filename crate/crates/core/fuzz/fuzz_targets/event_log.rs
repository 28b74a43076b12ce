#![no_main]

use libfuzzer_sys::fuzz_target;
use qsat::linksim::EventLog;

fuzz_target!(|text: &str| {
    if let Ok(log) = EventLog::parse_csv(text) {
        assert_eq!(EventLog::parse_csv(&log.to_csv_string()).expect("printed log parses"), log);
    }
});
