#![no_main]

use ekman_column::grid::VerticalGrid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = VerticalGrid::parse_levels(text, "fuzz") {
        let back = VerticalGrid::parse_levels(&grid.to_levels_text(), "fuzz").expect("serialized grid parses");
        assert_eq!(back, grid);
    }
});
