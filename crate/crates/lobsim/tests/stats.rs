use lobsim::reversal::logistic::{one_sided_normal_p, two_sample_t};
use lobsim::stats::{binomial_interval, mean, pearson, quantile, ranks, spearman, std_dev, welch};

#[test]
fn welch_reference_values() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 4.0, 6.0, 8.0, 10.0];
    let w = welch(&a, &b);
    assert!((w.t - -1.8973665961010275).abs() < 1e-12, "{}", w.t);
    assert!((w.df - 5.882352941176471).abs() < 1e-12, "{}", w.df);
    let r = two_sample_t(&b, &a);
    assert!((r.t_stat - 1.8973665961010275).abs() < 1e-12);
    assert!(r.p_value > 0.05 && r.p_value < 0.06, "{}", r.p_value);
}

#[test]
fn large_sample_p_value() {
    assert!((one_sided_normal_p(3.062602) - 0.0011).abs() < 5e-5);
    assert!((one_sided_normal_p(0.0) - 0.5).abs() < 1e-15);
}

#[test]
fn descriptive_statistics() {
    let xs = [3.0, 1.0, 2.0, 2.0];
    assert_eq!(mean(&xs), 2.0);
    assert!((std_dev(&xs) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!(ranks(&xs), vec![4.0, 1.0, 2.5, 2.5]);
    assert_eq!(quantile(&xs, 0.5), 2.0);
    assert_eq!(quantile(&[1.0, 2.0], 0.25), 1.25);
    assert!(mean(&[]).is_nan());
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 100.0, 1000.0]), 1.0);
    assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
}

#[test]
fn binomial_interval_brackets_the_mean() {
    let (lo, hi) = binomial_interval(1000, 0.3, 0.99);
    assert!(lo < 300 && hi > 300);
    assert!(lo > 250 && hi < 350);
    assert_eq!(binomial_interval(50, 0.0, 0.99), (0, 0));
    assert_eq!(binomial_interval(50, 1.0, 0.99).1, 50);
}
