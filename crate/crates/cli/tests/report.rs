use std::collections::BTreeMap;

use vmnull_cli::report::{gnuplot_script, write_table, Recorder};
use vmnull_cli::{Origin, Report, Status, Threshold};

fn sample() -> Report {
    let mut r = Report::new("free-decay", 9);
    r.check("a", 1.5e-11, Threshold::AtMost(1e-10), Origin::Design, "point 3");
    r.check("b", -3.1, Threshold::Within(-3.3, -2.7), Origin::Rate, "x = 0, t in [5, 40]");
    r.check("c", 0.1 + 0.2, Threshold::Equal(0.3), Origin::Oracle, "");
    r.check("d", 2.0, Threshold::AtLeast(1.0), Origin::Override, "with, commas \"and quotes\"");
    r.warn("something odd");
    r.note("slope", -3.1);
    r
}

#[test]
fn statuses_and_locations() {
    let r = sample();
    assert_eq!(r.get("a").unwrap().status, Status::Pass);
    assert_eq!(r.get("b").unwrap().status, Status::Pass);
    let c = r.get("c").unwrap();
    assert_eq!(c.status, Status::Fail);
    assert_eq!(c.location, "whole run");
    assert!(!r.passed(false));
    let mut nan = Report::new("x", 0);
    nan.check("n", f64::NAN, Threshold::AtMost(1.0), Origin::Design, "here");
    assert_eq!(nan.count(Status::Fail), 1);
}

#[test]
fn strict_mode_counts_skips_and_warnings() {
    let mut r = Report::new("x", 0);
    r.check("a", 0.0, Threshold::AtMost(1.0), Origin::Design, "");
    assert!(r.passed(true));
    r.skip("s", Threshold::AtMost(1.0), Origin::Rate, "no data");
    assert!(r.passed(false) && !r.passed(true));
    let mut w = Report::new("x", 0);
    w.warn("w");
    assert!(w.passed(false) && !w.passed(true));
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let r = sample();
    r.write(dir.path()).unwrap();
    assert_eq!(Report::read(dir.path()).unwrap(), r);
}

#[test]
fn thresholds_parse_their_display() {
    for t in [Threshold::AtMost(1e-10), Threshold::AtLeast(-2.5), Threshold::Within(-3.3, -2.7), Threshold::Equal(0.0)] {
        assert_eq!(t.to_string().parse::<Threshold>().unwrap(), t);
    }
    assert!("about 3".parse::<Threshold>().is_err());
    assert_eq!(Threshold::Within(3.0, 5.0).with_bound(2.0), Threshold::Within(2.0, 6.0));
}

#[test]
fn overrides_are_applied_and_unused_ones_warned() {
    let mut o = BTreeMap::new();
    o.insert("a".to_string(), 1e-20);
    o.insert("typo".to_string(), 1.0);
    let mut rec = Recorder::new("x", 0, &o);
    assert_eq!(rec.check("a", 1e-15, Threshold::AtMost(1e-10), Origin::Design, ""), Status::Fail);
    assert_eq!(rec.check("b", 1e-15, Threshold::AtMost(1e-10), Origin::Design, ""), Status::Pass);
    let r = rec.finish();
    assert_eq!(r.get("a").unwrap().origin, Origin::Override);
    assert_eq!(r.get("b").unwrap().origin, Origin::Design);
    assert_eq!(r.warnings.len(), 1);
    assert!(r.warnings[0].contains("typo"));
}

#[test]
fn tables_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    write_table(&p, &["t", "u", "value"], &[vec![1.0, 0.5, 2.0], vec![2.0, 0.5, 0.25]]).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "t,u,value\n1e0,5e-1,2e0\n2e0,5e-1,2.5e-1\n");
    assert!(write_table(&p, &["t"], &[vec![1.0, 2.0]]).is_err());
    let s = gnuplot_script(&[p]);
    assert!(s.contains("'t.csv' using 1:(abs($3))"), "{s}");
}
