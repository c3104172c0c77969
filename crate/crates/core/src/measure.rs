//! Finite measure spaces: a grid of nodes with positive weights per level.
//!
//! A continuous level is represented by a Gauss–Legendre rule on a bounded
//! interval (single or composite panels); a discrete level carries explicit
//! point masses. Every integral over a level becomes a weighted sum.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Quadrature,
    Discrete,
}

/// Nodes (strictly increasing) and positive weights of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    level: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: GridKind,
}

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Gauss–Legendre rule with `n` nodes on `[a, b]`.
pub fn make_gauss_legendre_grid(interval: (f64, f64), n: usize, level: usize) -> Result<Grid> {
    make_composite_gauss_legendre_grid(&[interval.0, interval.1], n, level)
}

/// Composite Gauss–Legendre rule: `n` nodes on each panel
/// `[breakpoints[k], breakpoints[k + 1]]`.
pub fn make_composite_gauss_legendre_grid(
    breakpoints: &[f64],
    n: usize,
    level: usize,
) -> Result<Grid> {
    if n == 0 {
        return Err(Error::ShapeError("quadrature needs n >= 1".into()));
    }
    if breakpoints.len() < 2 {
        return Err(Error::ShapeError("need at least two breakpoints".into()));
    }
    for pair in breakpoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInterval(a, b));
        }
    }
    let (ref_nodes, ref_weights) = legendre_rule(n);
    let mut nodes = Vec::with_capacity(n * (breakpoints.len() - 1));
    let mut weights = Vec::with_capacity(nodes.capacity());
    for pair in breakpoints.windows(2) {
        let half = 0.5 * (pair[1] - pair[0]);
        let mid = 0.5 * (pair[1] + pair[0]);
        for (&t, &wt) in ref_nodes.iter().zip(&ref_weights) {
            nodes.push(mid + half * t);
            weights.push(half * wt);
        }
    }
    Ok(Grid {
        level,
        nodes,
        weights,
        kind: GridKind::Quadrature,
    })
}

/// Nodes in increasing order and weights on [-1, 1].
fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Discrete level with the given points and positive masses. Points are
/// stored sorted; the masses follow their points.
pub fn make_discrete_grid(points: &[f64], masses: &[f64], level: usize) -> Result<Grid> {
    if points.len() != masses.len() {
        return Err(Error::ShapeError(format!(
            "{} points but {} masses",
            points.len(),
            masses.len()
        )));
    }
    if let Some(&bad) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::InvalidWeight(bad));
    }
    if let Some(&bad) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::ShapeError(format!("non-finite point {bad}")));
    }
    let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(masses.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(dup) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateNode(dup[0].0));
    }
    Ok(Grid {
        level,
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
        kind: GridKind::Discrete,
    })
}

/// `Σ_i weights[i] · values[i]`
pub fn integrate(grid: &Grid, values: &[f64]) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::ShapeError(format!(
            "{} values on a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    Ok(grid.weights.iter().zip(values).map(|(w, v)| w * v).sum())
}

impl Grid {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub(crate) fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn weights_sum_to_interval_length() {
        let g = make_gauss_legendre_grid((-1.0, 1.0), 4, 0).unwrap();
        assert_abs_diff_eq!(g.total_mass(), 2.0, epsilon = 1e-15);
        assert_eq!(g.kind(), GridKind::Quadrature);
    }

    #[test]
    fn two_point_rule_integrates_square() {
        let g = make_gauss_legendre_grid((-1.0, 1.0), 2, 0).unwrap();
        assert_abs_diff_eq!(g.integrate_fn(|x| x * x), 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn cubic_on_unit_interval() {
        let g = make_gauss_legendre_grid((0.0, 1.0), 8, 0).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| x.powi(3)).collect();
        assert_abs_diff_eq!(integrate(&g, &vals).unwrap(), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn nodes_strictly_inside_and_increasing() {
        for n in [1, 2, 5, 17, 64] {
            let g = make_gauss_legendre_grid((-3.0, 2.0), n, 1).unwrap();
            assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(g.nodes().iter().all(|&x| x > -3.0 && x < 2.0));
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn composite_panels() {
        let g = make_composite_gauss_legendre_grid(&[-1.0, 0.0, 2.0], 3, 0).unwrap();
        assert_eq!(g.len(), 6);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert_abs_diff_eq!(g.total_mass(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_interval_rejected() {
        assert_eq!(
            make_gauss_legendre_grid((1.0, 1.0), 3, 0),
            Err(Error::InvalidInterval(1.0, 1.0))
        );
        assert!(matches!(
            make_gauss_legendre_grid((2.0, 1.0), 3, 0),
            Err(Error::InvalidInterval(..))
        ));
    }

    #[test]
    fn discrete_grids() {
        let g = make_discrete_grid(&[0.0, 1.0], &[1.0, 1.0], 0).unwrap();
        assert_eq!(g.kind(), GridKind::Discrete);
        assert_eq!(integrate(&g, &[3.0, 4.0]).unwrap(), 7.0);
        assert_eq!(integrate(&g, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            make_discrete_grid(&[0.0, 0.0], &[1.0, 1.0], 0),
            Err(Error::DuplicateNode(0.0))
        );
        assert_eq!(
            make_discrete_grid(&[0.0, 1.0], &[1.0, 0.0], 0),
            Err(Error::InvalidWeight(0.0))
        );
        let p = make_discrete_grid(&[0.0, 1.0, 2.0], &[0.5, 0.25, 0.25], 0).unwrap();
        assert_eq!(p.total_mass(), 1.0);
    }

    #[test]
    fn integrate_length_mismatch() {
        let g = make_discrete_grid(&[0.0, 1.0], &[1.0, 1.0], 0).unwrap();
        assert!(matches!(integrate(&g, &[1.0]), Err(Error::ShapeError(_))));
    }

    /// erf via the everywhere-positive series
    /// erf(x) = 2/√π · e^{−x²} · Σ_k 2^k x^{2k+1} / (1·3·…·(2k+1)).
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term > 1e-18 * sum {
            k += 1.0;
            term *= 2.0 * x * x / (2.0 * k + 1.0);
            sum += term;
        }
        2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    }

    #[test]
    fn gaussian_density_mass() {
        let exact = erf_series(8.0 / 2f64.sqrt());
        assert_abs_diff_eq!(erf_series(1.0), 0.842_700_792_949_714_9, epsilon = 1e-15);
        let g = make_gauss_legendre_grid((-8.0, 8.0), 64, 0).unwrap();
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let approx = g.integrate_fn(|x| norm * (-0.5 * x * x).exp());
        assert_abs_diff_eq!(approx, exact, epsilon = 1e-12);
        assert_abs_diff_eq!(approx, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn exact_on_monomials(n in 1usize..30, a in -3.0f64..0.0, len in 0.5f64..4.0) {
            let b = a + len;
            let g = make_gauss_legendre_grid((a, b), n, 0).unwrap();
            for deg in 0..(2 * n) as i32 {
                let exact = (b.powi(deg + 1) - a.powi(deg + 1)) / (deg + 1) as f64;
                let scale = (b.abs().max(a.abs())).powi(deg) * len;
                let got = g.integrate_fn(|x| x.powi(deg));
                prop_assert!((got - exact).abs() <= 1e-13 * scale.max(1.0),
                    "deg {} n {}: {} vs {}", deg, n, got, exact);
            }
        }

        #[test]
        fn integrate_is_linear(
            vals in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20),
            alpha in -5.0f64..5.0, beta in -5.0f64..5.0,
        ) {
            let n = vals.len();
            let g = make_gauss_legendre_grid((0.0, 1.0), n, 0).unwrap();
            let u: Vec<f64> = vals.iter().map(|p| p.0).collect();
            let v: Vec<f64> = vals.iter().map(|p| p.1).collect();
            let comb: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = integrate(&g, &comb).unwrap();
            let rhs = alpha * integrate(&g, &u).unwrap() + beta * integrate(&g, &v).unwrap();
            let scale = g.weights().iter().zip(&comb).map(|(w, c)| (w * c).abs()).sum::<f64>()
                + (alpha * integrate(&g, &u).unwrap()).abs() + (beta * integrate(&g, &v).unwrap()).abs();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * scale.max(1e-300));
        }
    }
}
