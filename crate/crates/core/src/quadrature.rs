//! Adaptive Simpson quadrature with a divergence cap.

/// The integrand exceeded the cap (or was not finite) at `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unbounded {
    pub at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simpson {
    /// Absolute error per unit length, also used as a relative tolerance.
    pub tol: f64,
    /// Integrand values above this are treated as infinite.
    pub cap: f64,
    /// Initial panels per unit length, so narrow features are not stepped over.
    pub panels_per_unit: f64,
    pub max_depth: u32,
}

impl Default for Simpson {
    fn default() -> Self {
        Simpson { tol: 1e-12, cap: 1e12, panels_per_unit: 32.0, max_depth: 48 }
    }
}

impl Simpson {
    pub fn new(tol: f64, cap: f64) -> Self {
        Simpson { tol, cap, ..Default::default() }
    }

    #[inline]
    fn eval<F: Fn(f64) -> f64>(&self, f: &F, x: f64) -> Result<f64, Unbounded> {
        let v = f(x);
        if v.is_finite() && v <= self.cap {
            Ok(v)
        } else {
            Err(Unbounded { at: x })
        }
    }

    /// `∫_a^b f`, `a ≤ b`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64, Unbounded> {
        debug_assert!(a <= b);
        if b <= a {
            return Ok(0.0);
        }
        let panels = (((b - a) * self.panels_per_unit).ceil() as usize).max(1);
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        let mut x0 = a;
        let mut f0 = self.eval(&f, x0)?;
        for k in 1..=panels {
            let x1 = if k == panels { b } else { a + k as f64 * h };
            let xm = 0.5 * (x0 + x1);
            let fm = self.eval(&f, xm)?;
            let f1 = self.eval(&f, x1)?;
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            total += self.refine(&f, x0, x1, f0, fm, f1, whole, 0)?;
            x0 = x1;
            f0 = f1;
        }
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        depth: u32,
    ) -> Result<f64, Unbounded> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(f, lm)?;
        let frm = self.eval(f, rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let target = (self.tol * (b - a)).max(self.tol * (left + right).abs());
        if depth >= self.max_depth || delta.abs() <= 15.0 * target {
            return Ok(left + right + delta / 15.0);
        }
        Ok(self.refine(f, a, m, fa, flm, fm, left, depth + 1)? + self.refine(f, m, b, fm, frm, fb, right, depth + 1)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = Simpson::default();
        let v = q.integrate(|x| x * x * x - x, 0.0, 2.0).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn kink_and_peak() {
        let q = Simpson::new(1e-12, 1e12);
        let v = q.integrate(|x: f64| (x - 0.37).abs(), 0.0, 1.0).unwrap();
        let exact = 0.37f64.powi(2) / 2.0 + 0.63f64.powi(2) / 2.0;
        assert!((v - exact).abs() < 1e-11);
        // 1/(x² + c²) has integral atan(x/c)/c
        let c = 1e-3;
        let v = q.integrate(|x: f64| 1.0 / ((x - 0.5).powi(2) + c * c), 0.0, 1.0).unwrap();
        let exact = 2.0 * (0.5 / c).atan() / c;
        assert!((v - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn reports_unbounded() {
        let q = Simpson::new(1e-10, 1e6);
        let err = q.integrate(|x: f64| 1.0 / (x - 0.5).abs(), 0.0, 1.0).unwrap_err();
        assert!((err.at - 0.5).abs() < 1e-3);
    }
}
