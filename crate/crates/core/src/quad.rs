//! Quadrature helpers.

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on [a, b] with `panels` panels.
pub fn composite_gl(a: f64, b: f64, nodes: usize, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let per = (nodes / panels).max(1);
    let (x, w) = gauss_legendre(per);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(per * panels);
    let mut ws = Vec::with_capacity(per * panels);
    for k in 0..panels {
        let lo = a + k as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            xs.push(lo + 0.5 * h * (xi + 1.0));
            ws.push(0.5 * h * wi);
        }
    }
    (xs, ws)
}

/// Trapezoid rule on a (possibly nonuniform) grid.
pub fn trapezoid(x: &[f64], g: &[f64]) -> f64 {
    x.windows(2)
        .zip(g.windows(2))
        .map(|(xs, gs)| 0.5 * (xs[1] - xs[0]) * (gs[0] + gs[1]))
        .sum()
}

/// Trapezoid with the Hermite end correction h²/12 (g'_i - g'_{i+1}) per panel.
pub fn hermite_trapezoid(x: &[f64], g: &[f64], dg: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        let h = x[i + 1] - x[i];
        s += 0.5 * h * (g[i] + g[i + 1]) + h * h / 12.0 * (dg[i] - dg[i + 1]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        for k in 0..16 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((s - exact).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn composite_gaussian() {
        let (x, w) = composite_gl(0.0, 8.0, 512, 8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * (-x * x).exp()).sum();
        assert!((s - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_beats_trapezoid() {
        let x: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let g: Vec<f64> = x.iter().map(|x| x.sin()).collect();
        let dg: Vec<f64> = x.iter().map(|x| x.cos()).collect();
        let exact = 1.0 - 2f64.cos();
        assert!((trapezoid(&x, &g) - exact).abs() > 1e-4);
        assert!((hermite_trapezoid(&x, &g, &dg) - exact).abs() < 1e-6);
    }
}
