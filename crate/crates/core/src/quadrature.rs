//! Gauss-Legendre rules on cells and edges.

use crate::mesh::{Cell, Edge};
use crate::Point;

/// Points and positive weights; the weights sum to the measure of the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `n`-point Gauss-Legendre nodes and weights on `[0, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for k in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
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
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the k-th largest root.
        nodes[n - 1 - k] = 0.5 * (1.0 + x);
        nodes[k] = 0.5 * (1.0 - x);
        weights[n - 1 - k] = 0.5 * w;
        weights[k] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor rule on the reference square `[0,1]²` with `n` points per direction.
pub fn reference_square(n: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            points.push([x[a], x[b]]);
            weights.push(w[a] * w[b]);
        }
    }
    QuadratureRule { points, weights }
}

/// Tensor Gauss rule on `cell`, exact for polynomials of degree `2n-1` in
/// each variable.
pub fn gauss_cell(cell: &Cell, n: usize) -> QuadratureRule {
    let reference = reference_square(n);
    let area = cell.area();
    QuadratureRule {
        points: reference.points.iter().map(|p| cell.from_local(*p)).collect(),
        weights: reference.weights.iter().map(|w| w * area).collect(),
    }
}

/// Gauss rule along `edge`, exact for univariate polynomials of degree `2n-1`.
pub fn gauss_edge(edge: &Edge, n: usize) -> QuadratureRule {
    let (t, w) = gauss_legendre(n);
    QuadratureRule {
        points: t.iter().map(|&s| edge.point_at(s)).collect(),
        weights: w.iter().map(|wi| wi * edge.length).collect(),
    }
}
