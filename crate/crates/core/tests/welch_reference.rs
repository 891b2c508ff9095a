mod common;

use caadam::bench::stats::{significance_stars, welch_t_test};
use common::CANNED;

#[test]
fn matches_reference_values() {
    for (a, b, t, p) in CANNED {
        let r = welch_t_test(a, b).unwrap();
        assert!((r.t - t).abs() <= 1e-9, "{a:?} vs {b:?}: t {} != {t}", r.t);
        assert!(
            (r.p_value - p).abs() <= 1e-9,
            "{a:?} vs {b:?}: p {} != {p}",
            r.p_value
        );
    }
}

#[test]
fn antisymmetric_in_arguments() {
    for (a, b, _, _) in CANNED {
        let ab = welch_t_test(a, b).unwrap();
        let ba = welch_t_test(b, a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert!((ab.p_value - ba.p_value).abs() < 1e-15);
        assert!((ab.p_less() - ba.p_greater()).abs() < 1e-15);
        assert!((ab.p_less() + ab.p_greater() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_sided_halves_two_sided() {
    let r = welch_t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert!((r.p_less() - r.p_value / 2.0).abs() < 1e-14);
}

#[test]
fn star_boundaries() {
    let cases = [
        (0.05, ""),
        (0.05 - 1e-12, "*"),
        (0.01, "*"),
        (0.01 - 1e-12, "**"),
        (0.001, "**"),
        (0.001 - 1e-12, "***"),
        (0.0005, "***"),
        (0.0, "***"),
        (0.7, ""),
    ];
    for (p, stars) in cases {
        assert_eq!(significance_stars(p), stars, "p={p}");
    }
}
