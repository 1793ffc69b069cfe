//! Small numerical building blocks shared by the analytic modules.

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Table of `ln k!` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        let mut t = Vec::with_capacity(n + 1);
        t.push(0.0);
        for k in 1..=n {
            t.push(t[k - 1] + (k as f64).ln());
        }
        Self(t)
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `v^l / l!`, evaluated through logarithms so large `l` neither
    /// overflows nor loses the small result.
    #[inline]
    pub fn pow_over_factorial(&self, v: f64, l: usize) -> f64 {
        if l == 0 {
            return 1.0;
        }
        if v == 0.0 {
            return 0.0;
        }
        let mag = (l as f64 * v.abs().ln() - self.0[l]).exp();
        if v < 0.0 && l % 2 == 1 {
            -mag
        } else {
            mag
        }
    }

    /// `v^l / l! * e^{s}` with the exponential folded into the logarithm.
    #[inline]
    pub fn pow_over_factorial_scaled(&self, v: f64, l: usize, s: f64) -> f64 {
        if l == 0 {
            return s.exp();
        }
        if v == 0.0 {
            return 0.0;
        }
        let mag = (l as f64 * v.abs().ln() - self.0[l] + s).exp();
        if v < 0.0 && l % 2 == 1 {
            -mag
        } else {
            mag
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = CompensatedSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s.add(w * f(mid + half * x));
        }
        half * s.value()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn pow_over_factorial_matches_direct() {
        let lf = LnFactorials::new(200);
        assert!((lf.pow_over_factorial(2.5, 4) - 2.5f64.powi(4) / 24.0).abs() < 1e-13);
        assert!((lf.pow_over_factorial(-2.0, 3) + 8.0 / 6.0).abs() < 1e-13);
        assert_eq!(lf.pow_over_factorial(0.0, 3), 0.0);
        assert_eq!(lf.pow_over_factorial(0.0, 0), 1.0);
        // 50^170/170! is finite even though both parts overflow separately.
        assert!(lf.pow_over_factorial(50.0, 170).is_finite());
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
        let gl = GaussLegendre::new(1);
        assert!((gl.integrate(1.0, 3.0, |x| x) - 4.0).abs() < 1e-14);
    }
}
