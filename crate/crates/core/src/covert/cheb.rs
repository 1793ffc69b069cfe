//! Piecewise Chebyshev interpolants with exact antiderivatives.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
struct Piece {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
    /// Antiderivative coefficients, zero at the left end.
    anti: Vec<f64>,
}

impl Piece {
    #[inline]
    fn to_unit(&self, x: f64) -> f64 {
        if self.b > self.a {
            (2.0 * x - self.a - self.b) / (self.b - self.a)
        } else {
            0.0
        }
    }

    fn eval(&self, x: f64) -> f64 {
        clenshaw(&self.coeffs, self.to_unit(x).clamp(-1.0, 1.0))
    }

    /// ∫_a^x of the interpolant.
    fn integral_to(&self, x: f64) -> f64 {
        0.5 * (self.b - self.a) * clenshaw(&self.anti, self.to_unit(x).clamp(-1.0, 1.0))
    }
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

/// Chebyshev-Lobatto points `cos(πk/p)`, `k = 0..=p`, mapped onto `[a, b]`.
pub fn lobatto_nodes(a: f64, b: f64, p: usize) -> Vec<f64> {
    (0..=p)
        .map(|k| 0.5 * (a + b) + 0.5 * (b - a) * (PI * k as f64 / p as f64).cos())
        .collect()
}

fn values_to_coeffs(values: &[f64]) -> Vec<f64> {
    let p = values.len() - 1;
    let mut c = vec![0.0; p + 1];
    for (j, cj) in c.iter_mut().enumerate() {
        let mut s = 0.0;
        for (k, &v) in values.iter().enumerate() {
            let w = if k == 0 || k == p { 0.5 } else { 1.0 };
            s += w * v * (PI * (j * k) as f64 / p as f64).cos();
        }
        *cj = 2.0 * s / p as f64;
    }
    c[0] *= 0.5;
    c[p] *= 0.5;
    c
}

fn antiderivative(c: &[f64]) -> Vec<f64> {
    let p = c.len() - 1;
    let get = |k: usize| if k <= p { c[k] } else { 0.0 };
    let mut a = vec![0.0; p + 2];
    a[1] = get(0) - 0.5 * get(2);
    for k in 2..=p + 1 {
        a[k] = (get(k - 1) - get(k + 1)) / (2.0 * k as f64);
    }
    // Fix the constant so the antiderivative vanishes at t = -1.
    let at_minus_one: f64 = a.iter().enumerate().skip(1).map(|(k, v)| if k % 2 == 0 { *v } else { -v }).sum();
    a[0] = -at_minus_one;
    a
}

/// A function represented by one polynomial interpolant per interval between
/// consecutive breakpoints.
#[derive(Debug, Clone)]
pub struct PiecewiseCheb {
    breaks: Vec<f64>,
    pieces: Vec<Piece>,
    cum: Vec<f64>,
}

impl PiecewiseCheb {
    /// Interpolates `f` with `p + 1` Lobatto points per piece.
    pub fn from_fn<F: FnMut(f64) -> f64>(breaks: &[f64], p: usize, mut f: F) -> Self {
        let values: Vec<Vec<f64>> = breaks
            .windows(2)
            .map(|w| lobatto_nodes(w[0], w[1], p).into_iter().map(&mut f).collect())
            .collect();
        Self::from_values(breaks, &values)
    }

    /// `values[k]` holds the function at `lobatto_nodes(breaks[k], breaks[k+1], p)`.
    pub fn from_values(breaks: &[f64], values: &[Vec<f64>]) -> Self {
        assert!(breaks.len() >= 2 && values.len() == breaks.len() - 1);
        let mut pieces = Vec::with_capacity(values.len());
        let mut cum = Vec::with_capacity(breaks.len());
        cum.push(0.0);
        for (w, v) in breaks.windows(2).zip(values) {
            let coeffs = values_to_coeffs(v);
            let anti = antiderivative(&coeffs);
            let piece = Piece {
                a: w[0],
                b: w[1],
                coeffs,
                anti,
            };
            let total = piece.integral_to(w[1]);
            cum.push(cum.last().unwrap() + total);
            pieces.push(piece);
        }
        Self {
            breaks: breaks.to_vec(),
            pieces,
            cum,
        }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    #[inline]
    fn piece_index(&self, x: f64) -> usize {
        let k = self.breaks.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(self.pieces.len() - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].eval(x)
    }

    /// ∫ from the first breakpoint to `x` (clamped to the domain).
    pub fn cumulative(&self, x: f64) -> f64 {
        let lo = self.breaks[0];
        let hi = *self.breaks.last().unwrap();
        let x = x.clamp(lo, hi);
        let k = self.piece_index(x);
        self.cum[k] + self.pieces[k].integral_to(x)
    }

    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.cumulative(hi) - self.cumulative(lo)
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_smooth_functions_and_integrals() {
        let breaks = [0.0, 0.7, 1.9, 2.0, 3.5];
        let f = |x: f64| (-x).exp() * (1.0 + x * x);
        let pc = PiecewiseCheb::from_fn(&breaks, 24, f);
        for i in 0..=100 {
            let x = 3.5 * i as f64 / 100.0;
            assert!((pc.eval(x) - f(x)).abs() < 1e-13, "x = {x}");
        }
        // ∫ e^{-x}(1+x²) = -e^{-x}(x² + 2x + 3)
        let anti = |x: f64| -(-x).exp() * (x * x + 2.0 * x + 3.0);
        assert!((pc.total() - (anti(3.5) - anti(0.0))).abs() < 1e-13);
        assert!((pc.integral(0.3, 2.7) - (anti(2.7) - anti(0.3))).abs() < 1e-13);
    }

    #[test]
    fn handles_jumps_at_breakpoints() {
        let breaks = [0.0, 1.0, 2.0];
        let values = vec![vec![1.0; 5], vec![2.0; 5]];
        let pc2 = PiecewiseCheb::from_values(&breaks, &values);
        assert_eq!(pc2.eval(0.999), 1.0);
        assert_eq!(pc2.eval(1.0), 2.0);
        assert!((pc2.total() - 3.0).abs() < 1e-14);
    }
}
