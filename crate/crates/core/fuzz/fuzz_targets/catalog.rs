#![no_main]

use libfuzzer_sys::fuzz_target;
use qsat::catalog::StationCatalog;

fuzz_target!(|text: &str| {
    if let Ok(catalog) = StationCatalog::parse(text) {
        let again = StationCatalog::parse(&catalog.to_text()).expect("printed catalog parses");
        assert_eq!(again, catalog);
    }
});
