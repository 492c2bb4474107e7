//! Gauss-Legendre nodes and weights.

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Tensor-product rule over the box `[lo_i, hi_i]`: calls `f(point, weight)`
/// for every node.
pub fn tensor_rule(order: usize, bounds: &[(f64, f64)], mut f: impl FnMut(&[f64], f64)) {
    let (nodes, weights) = gauss_legendre(order);
    let dim = bounds.len();
    let mut index = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    loop {
        let mut w = 1.0;
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            let half = 0.5 * (hi - lo);
            point[axis] = lo + half * (nodes[index[axis]] + 1.0);
            w *= half * weights[index[axis]];
        }
        f(&point, w);
        let mut axis = 0;
        loop {
            if axis == dim {
                return;
            }
            index[axis] += 1;
            if index[axis] < order {
                break;
            }
            index[axis] = 0;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            // degree 2n-1 is exact
            let deg = 2 * n - 1;
            let approx: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| w * x.powi(deg as i32 - 1))
                .sum();
            let exact = if (deg - 1) % 2 == 0 {
                2.0 / deg as f64
            } else {
                0.0
            };
            assert!((approx - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn tensor_rule_area() {
        let mut total = 0.0;
        tensor_rule(8, &[(0.0, 2.0), (-1.0, 1.0)], |p, w| {
            total += w * p[0] * p[1] * p[1]
        });
        // int_0^2 x dx * int_-1^1 y^2 dy = 2 * 2/3
        assert!((total - 4.0 / 3.0).abs() < 1e-13);
    }
}
