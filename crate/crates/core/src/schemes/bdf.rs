use num_rational::Ratio;

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// Coefficients of the BDF-k time derivative and of the matching k-step
/// extrapolation.
///
/// The discrete derivative is `(α u^{n+1} − Σ_j a_j u^{n−j}) / τ` and the
/// extrapolated state is `Σ_j b_j u^{n−j}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BdfTable {
    pub k: usize,
    pub alpha: Rational,
    pub a_coeffs: Vec<Rational>,
    pub b_coeffs: Vec<Rational>,
}

fn r(n: i64, d: i64) -> Rational {
    Ratio::new(n, d)
}

fn ints(v: &[i64]) -> Vec<Rational> {
    v.iter().map(|&x| Ratio::from_integer(x)).collect()
}

/// BDF table for `1 ≤ k ≤ 5`.
pub fn bdf_table(k: usize) -> Result<BdfTable> {
    let (alpha, a_coeffs, b_coeffs) = match k {
        1 => (r(1, 1), ints(&[1]), ints(&[1])),
        2 => (r(3, 2), vec![r(2, 1), r(-1, 2)], ints(&[2, -1])),
        3 => (r(11, 6), vec![r(3, 1), r(-3, 2), r(1, 3)], ints(&[3, -3, 1])),
        4 => (r(25, 12), vec![r(4, 1), r(-3, 1), r(4, 3), r(-1, 4)], ints(&[4, -6, 4, -1])),
        5 => (
            r(137, 60),
            vec![r(5, 1), r(-5, 1), r(10, 3), r(-5, 4), r(1, 5)],
            ints(&[5, -10, 10, -5, 1]),
        ),
        _ => return Err(Error::InvalidArgument(format!("BDF order {k} not supported (expected 1..=5)"))),
    };
    Ok(BdfTable { k, alpha, a_coeffs, b_coeffs })
}

pub(crate) fn to_f64(q: Rational) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

impl BdfTable {
    pub fn alpha_f64(&self) -> f64 {
        to_f64(self.alpha)
    }

    pub fn a_f64(&self) -> Vec<f64> {
        self.a_coeffs.iter().map(|&q| to_f64(q)).collect()
    }

    pub fn b_f64(&self) -> Vec<f64> {
        self.b_coeffs.iter().map(|&q| to_f64(q)).collect()
    }

    /// `Σ a_j h_j` over a history given newest first.
    pub fn history_combination(&self, history: &[&[f64]]) -> Vec<f64> {
        combine(&self.a_f64(), history)
    }

    /// `Σ b_j h_j` over a history given newest first.
    pub fn extrapolation(&self, history: &[&[f64]]) -> Vec<f64> {
        combine(&self.b_f64(), history)
    }

    /// `Σ a_j r_j` for scalar histories.
    pub fn scalar_history(&self, history: &[f64]) -> f64 {
        self.a_f64().iter().zip(history).map(|(a, r)| a * r).sum()
    }
}

fn combine(coeffs: &[f64], history: &[&[f64]]) -> Vec<f64> {
    let n = history[0].len();
    let mut out = vec![0.0; n];
    for (c, h) in coeffs.iter().zip(history) {
        for (o, v) in out.iter_mut().zip(h.iter()) {
            *o += c * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_and_fifth_order_coefficients() {
        let t = bdf_table(2).unwrap();
        assert_eq!(t.alpha, r(3, 2));
        assert_eq!(t.a_coeffs, vec![r(2, 1), r(-1, 2)]);
        assert_eq!(t.b_coeffs, ints(&[2, -1]));
        let t = bdf_table(5).unwrap();
        assert_eq!(t.alpha, r(137, 60));
        assert_eq!(t.a_coeffs, vec![r(5, 1), r(-5, 1), r(10, 3), r(-5, 4), r(1, 5)]);
    }

    #[test]
    fn consistency_is_exact() {
        for k in 1..=5 {
            let t = bdf_table(k).unwrap();
            let sa: Rational = t.a_coeffs.iter().sum();
            let sb: Rational = t.b_coeffs.iter().sum();
            assert_eq!(sa - t.alpha, Ratio::from_integer(0), "k={k}");
            assert_eq!(sb, Ratio::from_integer(1), "k={k}");
            assert_eq!(t.a_coeffs.len(), k);
        }
    }

    #[test]
    fn rejects_unsupported_orders() {
        assert!(bdf_table(0).is_err());
        assert!(bdf_table(6).is_err());
    }

    #[test]
    fn bdf_is_exact_on_polynomials_of_degree_k() {
        // α p(t_{n+1}) − Σ a_j p(t_{n−j}) = τ p'(t_{n+1}) for deg p ≤ k.
        for k in 1..=5 {
            let t = bdf_table(k).unwrap();
            let a = t.a_f64();
            for deg in 0..=k as i32 {
                let p = |s: f64| s.powi(deg);
                let dp = |s: f64| if deg == 0 { 0.0 } else { deg as f64 * s.powi(deg - 1) };
                let lhs = t.alpha_f64() * p(1.0) - (0..k).map(|j| a[j] * p(-(j as f64))).sum::<f64>();
                assert!((lhs - dp(1.0)).abs() < 1e-10, "k={k} deg={deg}");
            }
        }
    }
}
