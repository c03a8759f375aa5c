mod support;

use gamed_core::Metrics;

#[test]
fn closed_form_example() {
    let m = Metrics::from_counts(3, 1, 5, 1);
    assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.75, 0.75, 0.75, 0.8));
    let labels = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
    let preds = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0];
    assert_eq!(Metrics::from_predictions(&preds, &labels).unwrap(), m);
}

#[test]
fn matches_counting_oracle() {
    let r = support::criteria::metrics_report();
    assert!(r.closed_form_ok);
    assert_eq!(r.mismatches, 0, "{r:?}");
}

#[test]
fn all_correct_is_perfect() {
    let y = [0, 1, 1, 0, 1];
    let m = Metrics::from_predictions(&y, &y).unwrap();
    assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
}
