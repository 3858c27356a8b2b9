//! Reference elements on `[-1,1]^2`: tensor Gauss rules, the biquadratic
//! Lagrange element and the modal linear pressure element.

use crate::error::{Error, Result};

/// Gauss-Legendre points and weights on `[-1,1]`, computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=10).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok((points, weights))
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Legendre polynomials `L_0..L_2` on `[-1,1]`.
pub fn legendre_012(s: f64) -> [f64; 3] {
    [1.0, s, 0.5 * (3.0 * s * s - 1.0)]
}

/// Tensor-product rule on the reference square.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }
}

/// `n x n` Gauss rule, exact for polynomials of degree `2n-1` in each variable.
pub fn gauss_rule(points_per_axis: usize) -> Result<QuadratureRule> {
    let (x, w) = gauss_legendre_1d(points_per_axis)?;
    let mut points = Vec::with_capacity(x.len() * x.len());
    let mut weights = Vec::with_capacity(x.len() * x.len());
    for (yj, wj) in x.iter().zip(&w) {
        for (xi, wi) in x.iter().zip(&w) {
            points.push([*xi, *yj]);
            weights.push(wi * wj);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Q2 nodes in lexicographic order: node `3*b + a` sits at `(NODES_1D[a], NODES_1D[b])`.
pub const NODES_1D: [f64; 3] = [-1.0, 0.0, 1.0];

fn lagrange_1d(s: f64) -> [f64; 3] {
    [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)]
}

fn lagrange_1d_deriv(s: f64) -> [f64; 3] {
    [s - 0.5, -2.0 * s, s + 0.5]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarElement {
    /// Biquadratic Lagrange element, 9 nodal functions.
    Q2,
    /// Discontinuous linear element with modal basis `{1, x, y}`.
    P1,
}

/// Basis values `values[i][q]` and reference gradients `grads[i][q]`.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

impl ScalarElement {
    pub fn n_basis(self) -> usize {
        match self {
            ScalarElement::Q2 => 9,
            ScalarElement::P1 => 3,
        }
    }

    pub fn nodes(self) -> Vec<[f64; 2]> {
        match self {
            ScalarElement::Q2 => (0..9).map(|k| [NODES_1D[k % 3], NODES_1D[k / 3]]).collect(),
            ScalarElement::P1 => vec![[0.0, 0.0]],
        }
    }

    pub fn value(self, i: usize, p: [f64; 2]) -> f64 {
        match self {
            ScalarElement::Q2 => lagrange_1d(p[0])[i % 3] * lagrange_1d(p[1])[i / 3],
            ScalarElement::P1 => [1.0, p[0], p[1]][i],
        }
    }

    pub fn grad(self, i: usize, p: [f64; 2]) -> [f64; 2] {
        match self {
            ScalarElement::Q2 => {
                let (lx, ly) = (lagrange_1d(p[0]), lagrange_1d(p[1]));
                let (dx, dy) = (lagrange_1d_deriv(p[0]), lagrange_1d_deriv(p[1]));
                [dx[i % 3] * ly[i / 3], lx[i % 3] * dy[i / 3]]
            }
            ScalarElement::P1 => [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]][i],
        }
    }

    pub fn eval(self, points: &[[f64; 2]]) -> BasisTable {
        debug_assert!(points
            .iter()
            .all(|p| p[0].abs() <= 1.0 + 1e-12 && p[1].abs() <= 1.0 + 1e-12));
        let n = self.n_basis();
        BasisTable {
            values: (0..n).map(|i| points.iter().map(|&p| self.value(i, p)).collect()).collect(),
            grads: (0..n).map(|i| points.iter().map(|&p| self.grad(i, p)).collect()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_rule() {
        let r = gauss_rule(1).unwrap();
        assert_eq!(r.points, vec![[0.0, 0.0]]);
        assert_eq!(r.weights, vec![4.0]);
    }

    #[test]
    fn unsupported_orders() {
        assert!(matches!(gauss_rule(0), Err(Error::UnsupportedOrder(0))));
        assert!(gauss_rule(11).is_err());
    }

    #[test]
    fn rule_exactness() {
        for n in 1..=10 {
            let r = gauss_rule(n).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 4.0).abs() < 1e-13);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let d = 2 * n - 1;
            for a in 0..=d {
                for b in 0..=d {
                    let exact = |k: usize| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                    let got = r.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    assert!((got - exact(a) * exact(b)).abs() < 1e-13, "n={n} a={a} b={b}");
                }
            }
        }
        let r3 = gauss_rule(3).unwrap();
        assert!((r3.integrate(|p| p[0] * p[0] * p[1] * p[1]) - 4.0 / 9.0).abs() < 1e-15);
        let r2 = gauss_rule(2).unwrap();
        assert!(r2.integrate(|p| p[0].powi(3)).abs() < 1e-15);
    }

    #[test]
    fn q2_nodal_and_partition_of_unity() {
        let e = ScalarElement::Q2;
        let t = e.eval(&e.nodes());
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(t.values[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let q = gauss_rule(4).unwrap();
        let t = e.eval(&q.points);
        for k in 0..q.len() {
            let s: f64 = (0..9).map(|i| t.values[i][k]).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn p1_modal_values() {
        let t = ScalarElement::P1.eval(&[[0.5, -0.25]]);
        assert_eq!(t.values.iter().map(|v| v[0]).collect::<Vec<_>>(), vec![1.0, 0.5, -0.25]);
    }

    #[test]
    fn gradients_match_central_differences() {
        let h = 1e-6;
        for e in [ScalarElement::Q2, ScalarElement::P1] {
            for p in [[0.3, -0.2], [-0.71, 0.55], [0.05, 0.9]] {
                for i in 0..e.n_basis() {
                    let g = e.grad(i, p);
                    let fd = [
                        (e.value(i, [p[0] + h, p[1]]) - e.value(i, [p[0] - h, p[1]])) / (2.0 * h),
                        (e.value(i, [p[0], p[1] + h]) - e.value(i, [p[0], p[1] - h])) / (2.0 * h),
                    ];
                    for d in 0..2 {
                        let scale = g[d].abs().max(1.0);
                        assert!((g[d] - fd[d]).abs() / scale <= 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn q2_reproduces_biquadratics() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let e = ScalarElement::Q2;
        for _ in 0..10 {
            let c: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |p: [f64; 2]| {
                (0..9).map(|k| c[k] * p[0].powi((k % 3) as i32) * p[1].powi((k / 3) as i32)).sum::<f64>()
            };
            let nodal: Vec<f64> = e.nodes().into_iter().map(f).collect();
            for _ in 0..20 {
                let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let interp: f64 = (0..9).map(|i| nodal[i] * e.value(i, p)).sum();
                assert!((interp - f(p)).abs() <= 1e-13);
            }
        }
    }
}
