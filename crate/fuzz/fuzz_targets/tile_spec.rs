#![no_main]

use dwconv::TileConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(tile) = text.parse::<TileConfig>() else { return };
    assert!(tile.hr > 0 && tile.wr > 0 && tile.wr % 4 == 0);
    assert_eq!(tile.to_string().parse::<TileConfig>().unwrap(), tile);
});
