#![no_main]

use libfuzzer_sys::fuzz_target;
use qsat::catalog::StationCatalog;
use qsat::config::RawConfig;
use qsat::linksim::ScenarioConfig;

fuzz_target!(|text: &str| {
    let Ok(raw) = RawConfig::parse(text) else { return };
    let printed = raw.to_text();
    let again = RawConfig::parse(&printed).expect("printed config parses");
    assert_eq!(again.to_text(), printed);
    // Validation may reject anything but must not panic.
    let _ = ScenarioConfig::from_raw(&raw, &StationCatalog::builtin());
});
