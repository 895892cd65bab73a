//! Gauss–Legendre rules on the unit interval and their tensor products.

use std::f64::consts::PI;

/// A quadrature rule on the reference cell `[0, 1]^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    /// Reference coordinates, `dim` entries per point.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `n`-point Gauss–Legendre rule on `[0, 1]`, exact for degree `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Self {
        let (x, w) = gauss_legendre_unit(n);
        Self {
            dim: 1,
            points: x.into_iter().map(|xi| [xi, 0.0]).collect(),
            weights: w,
        }
    }

    /// Tensor-product Gauss–Legendre rule with `n` points per axis.
    pub fn tensor(dim: usize, n: usize) -> Self {
        if dim == 1 {
            return Self::gauss_legendre(n);
        }
        let (x, w) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (xi, wi) in x.iter().zip(&w) {
            for (yj, wj) in x.iter().zip(&w) {
                points.push([*xi, *yj]);
                weights.push(wi * wj);
            }
        }
        Self { dim, points, weights }
    }

    /// Points per axis needed to integrate degree `2p + 2` exactly.
    pub fn points_for_order(p: usize) -> usize {
        (2 * p + 3).div_ceil(2)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule mapped to `[0, 1]`,
/// sorted by increasing node.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let x = nodes.iter().map(|z| 0.5 * (z + 1.0)).collect();
    let w = weights.iter().map(|w| 0.5 * w).collect();
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}
