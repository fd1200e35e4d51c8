//! Summary statistics and the one-way ANOVA F-test.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean and sample (n-1) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Mean and sample SD of `values`. Values are summed in sorted order so the
/// result does not depend on the order they arrive in.
pub fn aggregate(values: &[f64]) -> Result<Summary> {
    if values.len() < 2 {
        return Err(Error::invalid(
            "need at least two values for a standard deviation",
        ));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    let sd = (dev.iter().sum::<f64>() / (n - 1.0)).sqrt();
    Ok(Summary {
        mean,
        sd,
        n: v.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
}

pub fn one_way_anova(groups: &[&[f64]]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::invalid("anova needs at least two groups"));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::invalid(format!(
            "every anova group needs at least two values, found one with {}",
            g.len()
        )));
    }
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = k - 1;
    let df_within = n - k;
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    // relative guard: between-group spread that is pure rounding noise is zero
    let scale = groups
        .iter()
        .flat_map(|g| g.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let noise = 1e-24 * scale * scale * n as f64;
    let (f, p) = if ss_between <= noise {
        (0.0, 1.0)
    } else if ss_within <= noise {
        (f64::INFINITY, 0.0)
    } else {
        let f = ms_between / ms_within;
        (f, f_upper_tail(f, df_between as f64, df_within as f64))
    };
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p,
    })
}

/// `P(X > f)` for `X ~ F(d1, d2)`.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let x = d2 / (d2 + d1 * f);
    regularized_incomplete_beta(x, d2 / 2.0, d1 / 2.0)
}

/// Lanczos approximation (g = 7, n = 9) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_x(a, b)` by the continued fraction (modified Lentz), using the
/// symmetry `I_x(a,b) = 1 - I_{1-x}(b,a)` where it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_two_groups() {
        let r = one_way_anova(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        assert!((r.f - 13.5).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (1, 4));
        assert!(r.p > 0.0 && r.p < 0.05);
    }

    #[test]
    fn identical_groups_give_zero() {
        let r = one_way_anova(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f, 0.0);
        assert_eq!(r.p, 1.0);
        let r = one_way_anova(&[&[0.9, 0.9], &[0.9, 0.9]]).unwrap();
        assert_eq!((r.f, r.p), (0.0, 1.0));
    }

    #[test]
    fn three_groups_have_two_between_dof() {
        let r = one_way_anova(&[&[1.0, 2.0], &[2.0, 3.0], &[5.0, 4.0]]).unwrap();
        assert_eq!(r.df_between, 2);
        assert_eq!(r.df_within, 3);
    }

    #[test]
    fn bad_groups_are_rejected() {
        assert!(one_way_anova(&[&[1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[&[1.0, 2.0], &[]]).is_err());
    }

    #[test]
    fn known_p_values() {
        // F(1,4) = 13.5: the tail equals the two-sided t(4) tail at sqrt(13.5)
        let p = f_upper_tail(13.5, 1.0, 4.0);
        assert!((p - 0.021_311_641_128_756_15).abs() < 1e-9, "{p}");
        // F(2,2) tail is 1/(1+f)
        for f in [0.5, 1.0, 3.0, 10.0] {
            assert!((f_upper_tail(f, 2.0, 2.0) - 1.0 / (1.0 + f)).abs() < 1e-13);
        }
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            fact *= n as f64;
            assert!((ln_gamma(n as f64 + 1.0) - fact.ln()).abs() < 1e-10);
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[90.0, 100.0]).unwrap();
        assert_eq!(s.mean, 95.0);
        assert!((s.sd - 7.0710678118654755).abs() < 1e-12);
        assert_eq!(aggregate(&[3.0, 3.0, 3.0]).unwrap().sd, 0.0);
        assert!(aggregate(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn shift_leaves_f_unchanged(
            a in proptest::collection::vec(-5.0f64..5.0, 2..8),
            b in proptest::collection::vec(-5.0f64..5.0, 2..8),
            shift in -100.0f64..100.0,
        ) {
            let r0 = one_way_anova(&[&a, &b]).unwrap();
            let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
            let r1 = one_way_anova(&[&sa, &sb]).unwrap();
            prop_assume!(r0.f.is_finite() && r0.f > 1e-6);
            prop_assert!((r0.f - r1.f).abs() <= 1e-6 * r0.f.max(1.0));
        }

        #[test]
        fn p_decreases_with_f(d1 in 1u32..10, d2 in 2u32..200, f in 0.01f64..20.0) {
            let p1 = f_upper_tail(f, d1 as f64, d2 as f64);
            let p2 = f_upper_tail(f * 1.1, d1 as f64, d2 as f64);
            prop_assert!((0.0..=1.0).contains(&p1));
            prop_assert!(p2 <= p1);
        }

        #[test]
        fn aggregate_ignores_order(mut v in proptest::collection::vec(0.0f64..1.0, 2..20), seed in any::<u64>()) {
            let a = aggregate(&v).unwrap();
            let mut rng = crate::numerics::Rng::new(seed);
            rng.shuffle(&mut v);
            prop_assert_eq!(a, aggregate(&v).unwrap());
        }
    }
}
