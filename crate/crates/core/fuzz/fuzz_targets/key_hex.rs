#![no_main]

use libfuzzer_sys::fuzz_target;
use qsat::protocols::{bits_to_hex, hex_to_bits, KeyFile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(key) = KeyFile::parse(text) {
        assert_eq!(KeyFile::parse(&key.to_text()).expect("printed key parses"), key);
    }
    // Raw body: the first byte picks a length near the digit count.
    if let Some((&b, rest)) = data.split_first() {
        if let Ok(hex) = std::str::from_utf8(rest) {
            let len = (hex.len() * 4).saturating_sub(usize::from(b % 4));
            if let Ok(bits) = hex_to_bits(hex, len) {
                assert_eq!(bits_to_hex(&bits), hex);
            }
        }
    }
});
