#![no_main]

use dwconv::layers::format_layer_file;
use dwconv::parse_layer_file;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(layers) = parse_layer_file(text, "fuzz") else { return };
    let again = parse_layer_file(&format_layer_file(&layers), "fuzz").expect("formatted layers parse");
    assert_eq!(layers, again);
});
