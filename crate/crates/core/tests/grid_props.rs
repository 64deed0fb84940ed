use ekman_column::grid::{StretchLaw, VerticalGrid};
use ekman_column::Error;
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = VerticalGrid> {
    prop::collection::vec(0.1f64..100.0, 2..40).prop_map(|sizes| {
        let mut z = vec![0.0];
        for h in sizes {
            z.push(z.last().unwrap() + h);
        }
        VerticalGrid::from_interfaces(z).unwrap()
    })
}

#[test]
fn ifs_grid_has_25_cells() {
    let g = VerticalGrid::ifs_l137_lowest_25();
    assert_eq!(g.n_cells(), 25);
    assert_eq!(g.interfaces()[0], 0.0);
    assert!((g.interfaces()[1] - 10.0).abs() < 1e-12);
    assert!(g.cell_sizes().windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn stretched_unstable_column() {
    let g = VerticalGrid::stretched(50, 10.0, 15, 1080.0, StretchLaw::Geometric).unwrap();
    assert_eq!(g.n_cells(), 65);
    assert!((g.interfaces()[50] - 500.0).abs() < 1e-9);
    assert_eq!(g.top(), 1080.0);
    // Re-sum the geometric block from the recovered ratio.
    let r = g.cell_sizes()[50] / 10.0;
    let sum: f64 = (1..=15).map(|k| 10.0 * r.powi(k)).sum();
    assert!((sum - 580.0).abs() < 1e-6, "{sum}");
    for w in g.cell_sizes()[50..].windows(2).take(13) {
        assert!((w[1] / w[0] - r).abs() < 1e-9);
    }
}

#[test]
fn stretched_rejects_short_top() {
    assert!(matches!(VerticalGrid::stretched(50, 10.0, 15, 600.0, StretchLaw::Geometric), Err(Error::Grid(_))));
}

#[test]
fn malformed_level_files_report_lines() {
    for (text, line) in [("0\n5\n5\n", 3), ("0\n# c\nabc\n", 3), ("1\n2\n3\n", 1), ("0\n-1\n", 2)] {
        match VerticalGrid::parse_levels(text, "levels.txt") {
            Err(Error::GridFile { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(VerticalGrid::parse_levels("0\n1\n", "x").is_err());
}

#[test]
fn level_file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("levels.txt");
    let g = VerticalGrid::ifs_l137_lowest_25();
    g.write_levels(&path).unwrap();
    assert_eq!(VerticalGrid::read_levels(&path).unwrap(), g);
}

#[test]
fn cell_lookup() {
    let g = VerticalGrid::from_interfaces(vec![0.0, 1.0, 3.0, 6.0]).unwrap();
    assert_eq!(g.cell_containing(0.0), Some(0));
    assert_eq!(g.cell_containing(1.0), Some(1));
    assert_eq!(g.cell_containing(6.0), Some(2));
    assert_eq!(g.cell_containing(6.5), None);
    assert_eq!(g.cell_containing(-0.1), None);
}

proptest! {
    #[test]
    fn refinement_nests(g in grid_strategy(), k in 2usize..6) {
        let f = g.refine(k).unwrap();
        prop_assert_eq!(f.n_cells(), k * g.n_cells());
        for (m, z) in g.interfaces().iter().enumerate() {
            prop_assert_eq!(f.interfaces()[k * m], *z);
        }
    }

    #[test]
    fn sizes_sum_to_top(g in grid_strategy()) {
        let sum: f64 = g.cell_sizes().iter().sum();
        prop_assert!((sum - g.top()).abs() <= 1e-12 * g.top());
        for (c, w) in g.centers().iter().zip(g.interfaces().windows(2)) {
            prop_assert!(*c > w[0] && *c < w[1]);
        }
    }

    #[test]
    fn levels_text_round_trips(g in grid_strategy()) {
        let back = VerticalGrid::parse_levels(&g.to_levels_text(), "mem").unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn parser_never_panics(text in "[0-9.#e\\- \n]{0,80}") {
        let _ = VerticalGrid::parse_levels(&text, "fuzz");
    }
}
