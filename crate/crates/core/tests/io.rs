use proptest::prelude::*;
use vss_core::io::{parse_ini, Table};

proptest! {
    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 3), 0..20)) {
        let mut t = Table::new(["a", "b", "c"]);
        for r in &rows {
            t.push(r.clone());
        }
        let back = Table::parse_csv(&t.to_csv()).unwrap();
        for (k, name) in ["a", "b", "c"].iter().enumerate() {
            let col = back.column(name).unwrap();
            let want: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            prop_assert_eq!(col, want);
        }
    }
}

#[test]
fn ini_sections_and_comments() {
    let m = parse_ini("# top\n[params]\np = 3\nalpha = -0.5\n\n[output]\nsvg = true\n").unwrap();
    assert_eq!(m["params"]["p"], "3");
    assert_eq!(m["params"]["alpha"], "-0.5");
    assert_eq!(m["output"]["svg"], "true");
}
