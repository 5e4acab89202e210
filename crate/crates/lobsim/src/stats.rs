//! Small statistics toolkit shared by the analytics modules.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n - 1 denominator; NaN below two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Average ranks (1-based), ties sharing the mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&ranks(xs), &ranks(ys))
}

/// Central binomial acceptance interval of count outcomes at level `conf`:
/// the smallest counts whose CDF reaches the lower and upper tail levels.
pub fn binomial_interval(n: u64, p: f64, conf: f64) -> (u64, u64) {
    let p = p.clamp(0.0, 1.0);
    if n == 0 || p == 0.0 {
        return (0, 0);
    }
    if p == 1.0 {
        return (n, n);
    }
    let b = Binomial::new(p, n).expect("valid binomial");
    let tail = (1.0 - conf) / 2.0;
    let first_reaching = |level: f64| {
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if b.cdf(mid) >= level {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    };
    (first_reaching(tail), first_reaching(1.0 - tail))
}

/// Upper-tail standard normal probability P(Z > z).
pub fn normal_upper_tail(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    n.sf(z)
}

/// Upper-tail Student t probability P(T > t).
pub fn t_upper_tail(t: f64, df: f64) -> f64 {
    if !df.is_finite() || df > 1e7 {
        return normal_upper_tail(t);
    }
    StudentsT::new(0.0, 1.0, df).expect("positive df").sf(t)
}

/// Two-sided normal quantile for a confidence level.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Welch {
    pub t: f64,
    pub df: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Welch's unequal-variance t statistic for mean(a) - mean(b).
pub fn welch(a: &[f64], b: &[f64]) -> Welch {
    let (va, vb) = (variance(a), variance(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    let diff = mean(a) - mean(b);
    let t = if se2 == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    } else {
        diff / se2.sqrt()
    };
    let df = if se2 == 0.0 {
        na + nb - 2.0
    } else {
        se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0))
    };
    Welch {
        t,
        df,
        n_a: a.len(),
        n_b: b.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn ranks_share_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn spearman_of_monotone_map_is_one() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(3)).collect();
        assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binomial_interval_brackets_mean() {
        let (lo, hi) = binomial_interval(1000, 0.3, 0.99);
        assert!(lo < 300 && hi > 300);
        assert!(lo > 250 && hi < 350);
    }

    #[test]
    fn normal_tail_reference() {
        assert!((normal_upper_tail(1.959963984540054) - 0.025).abs() < 1e-9);
    }
}
