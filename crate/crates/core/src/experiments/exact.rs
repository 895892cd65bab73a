//! Closed-form manufactured solutions and the source terms they induce.

use std::f64::consts::PI;

/// Value and derivatives of a smooth function at `(x, t)`: `u`, `∂ₜu`, `∇u`,
/// `Δu`, `∇Δu`, `Δ²u`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub u: f64,
    pub ut: f64,
    pub grad: [f64; 2],
    pub lap: f64,
    pub grad_lap: [f64; 2],
    pub bilap: f64,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Mobility `M(u, x)` with `∂ᵤM` and `∇ₓM`.
pub struct MobilityJet {
    pub m: f64,
    pub du: f64,
    pub dx: [f64; 2],
}

/// `∇·(M ∇w)` with `w = −κΔu + f(u)`, given `f'(u)` and `f''(u)`.
pub fn fourth_order_flux_divergence(j: &Jet, mob: &MobilityJet, kappa: f64, fp: f64, fpp: f64) -> f64 {
    let grad_w = [
        -kappa * j.grad_lap[0] + fp * j.grad[0],
        -kappa * j.grad_lap[1] + fp * j.grad[1],
    ];
    let lap_w = -kappa * j.bilap + fpp * dot(j.grad, j.grad) + fp * j.lap;
    let grad_m = [mob.du * j.grad[0] + mob.dx[0], mob.du * j.grad[1] + mob.dx[1]];
    dot(grad_m, grad_w) + mob.m * lap_w
}

/// `∇·(K(u) ∇u)` for a scalar `K` with derivative `K'`.
pub fn second_order_flux_divergence(j: &Jet, k: f64, dk: f64) -> f64 {
    dk * dot(j.grad, j.grad) + k * j.lap
}

/// `cos(ωx) cos(ωy)` (stationary).
pub fn cos_product(x: &[f64], omega: f64) -> Jet {
    let (cx, sx) = ((omega * x[0]).cos(), (omega * x[0]).sin());
    let (cy, sy) = ((omega * x[1]).cos(), (omega * x[1]).sin());
    let u = cx * cy;
    let grad = [-omega * sx * cy, -omega * cx * sy];
    let w2 = omega * omega;
    Jet {
        u,
        ut: 0.0,
        grad,
        lap: -2.0 * w2 * u,
        grad_lap: [-2.0 * w2 * grad[0], -2.0 * w2 * grad[1]],
        bilap: 4.0 * w2 * w2 * u,
    }
}

/// `(c + cos x cos y) cos t`.
pub fn shifted_cos_product(x: &[f64], t: f64, c: f64) -> Jet {
    let s = cos_product(x, 1.0);
    let (ct, st) = (t.cos(), t.sin());
    Jet {
        u: (c + s.u) * ct,
        ut: -(c + s.u) * st,
        grad: [s.grad[0] * ct, s.grad[1] * ct],
        lap: s.lap * ct,
        grad_lap: [s.grad_lap[0] * ct, s.grad_lap[1] * ct],
        bilap: s.bilap * ct,
    }
}

/// `(cos x cos y − 3x⁴/(8π) + x³) cos t`; only derivatives up to `Δu` are used.
pub fn quartic_perturbed(x: &[f64], t: f64) -> Jet {
    let s = cos_product(x, 1.0);
    let (ct, st) = (t.cos(), t.sin());
    let c = 3.0 / (8.0 * PI);
    let poly = -c * x[0].powi(4) + x[0].powi(3);
    let dpoly = -4.0 * c * x[0].powi(3) + 3.0 * x[0].powi(2);
    let ddpoly = -12.0 * c * x[0].powi(2) + 6.0 * x[0];
    let dddpoly = -24.0 * c * x[0] + 6.0;
    let ddddpoly = -24.0 * c;
    Jet {
        u: (s.u + poly) * ct,
        ut: -(s.u + poly) * st,
        grad: [(s.grad[0] + dpoly) * ct, s.grad[1] * ct],
        lap: (s.lap + ddpoly) * ct,
        grad_lap: [(s.grad_lap[0] + dddpoly) * ct, s.grad_lap[1] * ct],
        bilap: (s.bilap + ddddpoly) * ct,
    }
}

/// Barenblatt profile of `∂ₜu = m ∇·(u^{m−1}∇u)` in 1D with `t₀ = t + 1`:
/// value and `x`-derivative.
pub fn barenblatt(x: f64, t: f64, m: f64) -> (f64, f64) {
    let alpha = 1.0 / (m + 1.0);
    let t0 = t + 1.0;
    let scale = t0.powf(-alpha);
    let q = alpha * (m - 1.0) / (2.0 * m) / t0.powf(2.0 * alpha);
    let s = 1.0 - q * x * x;
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    let e = 1.0 / (m - 1.0);
    let u = scale * s.powf(e);
    let du = scale * e * s.powf(e - 1.0) * (-2.0 * q * x);
    (u, du)
}

#[cfg(test)]
mod tests {
    use super::*;

    type JetFn = dyn Fn(&[f64], f64) -> Jet;

    /// Checks every derivative in the jet against central differences of the
    /// lower-order entries.
    fn check(f: &JetFn, x: [f64; 2], t: f64) {
        let h = 1e-5;
        let j = f(&x, t);
        let at = |dx: f64, dy: f64| f(&[x[0] + dx, x[1] + dy], t);
        let tol = |v: f64| 1e-5 * (1.0 + v.abs());
        let ut = (f(&x, t + h).u - f(&x, t - h).u) / (2.0 * h);
        assert!((ut - j.ut).abs() < tol(j.ut), "ut {ut} vs {}", j.ut);
        let gx = (at(h, 0.0).u - at(-h, 0.0).u) / (2.0 * h);
        let gy = (at(0.0, h).u - at(0.0, -h).u) / (2.0 * h);
        assert!((gx - j.grad[0]).abs() < tol(gx) && (gy - j.grad[1]).abs() < tol(gy));
        let lap = (at(h, 0.0).grad[0] - at(-h, 0.0).grad[0] + at(0.0, h).grad[1] - at(0.0, -h).grad[1]) / (2.0 * h);
        assert!((lap - j.lap).abs() < tol(lap), "lap {lap} vs {}", j.lap);
        let glx = (at(h, 0.0).lap - at(-h, 0.0).lap) / (2.0 * h);
        let gly = (at(0.0, h).lap - at(0.0, -h).lap) / (2.0 * h);
        assert!((glx - j.grad_lap[0]).abs() < tol(glx) && (gly - j.grad_lap[1]).abs() < tol(gly));
        let bilap = (at(h, 0.0).grad_lap[0] - at(-h, 0.0).grad_lap[0] + at(0.0, h).grad_lap[1] - at(0.0, -h).grad_lap[1])
            / (2.0 * h);
        assert!((bilap - j.bilap).abs() < 1e-4 * (1.0 + bilap.abs()), "bilap {bilap} vs {}", j.bilap);
    }

    #[test]
    fn jets_agree_with_finite_differences() {
        for x in [[0.13, 0.71], [0.4, 0.05], [0.92, 0.33]] {
            check(&|x, _| cos_product(x, 4.0 * PI), x, 0.0);
        }
        for x in [[0.3, 5.1], [2.2, 1.7], [4.0, 6.0]] {
            check(&|x, t| shifted_cos_product(x, t, 1.0), x, 0.37);
            check(&|x, t| shifted_cos_product(x, t, 0.0), x, 0.81);
            check(&|x, t| quartic_perturbed(x, t), x, 0.52);
        }
    }

    #[test]
    fn flux_divergence_matches_differences_of_the_flux() {
        // M(u, x) = (1 + x) u², κ = 0.7, f(u) = u³ − u; flux q = M ∇w.
        let kappa = 0.7;
        let jet = |x: &[f64]| shifted_cos_product(x, 0.4, 1.0);
        let flux = |x: &[f64]| {
            let j = jet(x);
            let fp = 3.0 * j.u * j.u - 1.0;
            let m = (1.0 + x[0]) * j.u * j.u;
            [
                m * (-kappa * j.grad_lap[0] + fp * j.grad[0]),
                m * (-kappa * j.grad_lap[1] + fp * j.grad[1]),
            ]
        };
        let x = [1.1, 2.3];
        let h = 1e-5;
        let fd = (flux(&[x[0] + h, x[1]])[0] - flux(&[x[0] - h, x[1]])[0] + flux(&[x[0], x[1] + h])[1]
            - flux(&[x[0], x[1] - h])[1])
            / (2.0 * h);
        let j = jet(&x);
        let mob = MobilityJet { m: (1.0 + x[0]) * j.u * j.u, du: 2.0 * (1.0 + x[0]) * j.u, dx: [j.u * j.u, 0.0] };
        let exact = fourth_order_flux_divergence(&j, &mob, kappa, 3.0 * j.u * j.u - 1.0, 6.0 * j.u);
        assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "{fd} vs {exact}");
    }

    #[test]
    fn second_order_flux_matches_differences() {
        let jet = |x: &[f64]| quartic_perturbed(x, 0.3);
        let flux = |x: &[f64]| {
            let j = jet(x);
            [(1.0 + j.u) * j.grad[0], (1.0 + j.u) * j.grad[1]]
        };
        let x = [3.3, 0.9];
        let h = 1e-5;
        let fd = (flux(&[x[0] + h, x[1]])[0] - flux(&[x[0] - h, x[1]])[0] + flux(&[x[0], x[1] + h])[1]
            - flux(&[x[0], x[1] - h])[1])
            / (2.0 * h);
        let j = jet(&x);
        let exact = second_order_flux_divergence(&j, 1.0 + j.u, 1.0);
        assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()));
    }

    #[test]
    fn barenblatt_profile() {
        assert_eq!(barenblatt(0.0, 0.0, 2.0).0, 1.0);
        let (m, t) = (3.0, 0.5);
        let x = 0.7;
        let h = 1e-6;
        let fd = (barenblatt(x + h, t, m).0 - barenblatt(x - h, t, m).0) / (2.0 * h);
        assert!((fd - barenblatt(x, t, m).1).abs() < 1e-6);
        // Solves the equation away from the front: u_t = m (u^{m−1} u_x)_x.
        let ut = (barenblatt(x, t + h, m).0 - barenblatt(x, t - h, m).0) / (2.0 * h);
        let q = |y: f64| {
            let (u, du) = barenblatt(y, t, m);
            m * u.powf(m - 1.0) * du
        };
        let rhs = (q(x + 1e-4) - q(x - 1e-4)) / 2e-4;
        assert!((ut - rhs).abs() < 1e-5, "{ut} vs {rhs}");
        assert_eq!(barenblatt(4.9, 0.0, 2.0), (0.0, 0.0));
    }
}
