//! Adaptive piecewise Chebyshev interpolation.
//!
//! Each panel carries the values at the degree-16 Chebyshev extreme points
//! and is evaluated with the barycentric formula. A panel is split while the
//! interpolant misses the function by more than the tolerance at three probe
//! points placed between nodes.

use std::f64::consts::PI;

use crate::error::Result;

const DEG: usize = 16;

#[derive(Debug, Clone)]
pub(crate) struct ChebTable {
    /// Panel `k` spans `[breaks[k], breaks[k + 1]]`.
    breaks: Vec<f64>,
    values: Vec<[f64; DEG + 1]>,
}

fn node(j: usize) -> f64 {
    (j as f64 * PI / DEG as f64).cos()
}

fn weight(j: usize) -> f64 {
    let w = if j % 2 == 0 { 1.0 } else { -1.0 };
    if j == 0 || j == DEG {
        0.5 * w
    } else {
        w
    }
}

fn eval_panel(values: &[f64; DEG + 1], a: f64, b: f64, x: f64) -> f64 {
    let s = (2.0 * x - a - b) / (b - a);
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &v) in values.iter().enumerate() {
        let d = s - node(j);
        if d == 0.0 {
            return v;
        }
        let w = weight(j) / d;
        num += w * v;
        den += w;
    }
    num / den
}

impl ChebTable {
    /// Tabulates `f` on `[lo, hi]` starting from panels no longer than
    /// `panel_len`; panels shorter than `min_len` are accepted as they are.
    pub(crate) fn build<F>(mut f: F, lo: f64, hi: f64, panel_len: f64, tol: f64, min_len: f64) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let count = ((hi - lo) / panel_len).ceil().max(1.0) as usize;
        let step = (hi - lo) / count as f64;
        let mut table = ChebTable {
            breaks: vec![lo],
            values: Vec::new(),
        };
        for k in 0..count {
            let a = lo + k as f64 * step;
            let b = if k + 1 == count { hi } else { a + step };
            table.fill(&mut f, a, b, tol, min_len)?;
        }
        Ok(table)
    }

    fn fill(&mut self, f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64, min_len: f64) -> Result<()> {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut values = [0.0; DEG + 1];
        for (j, v) in values.iter_mut().enumerate() {
            *v = f(mid + half * node(j))?;
        }
        let mut err: f64 = 0.0;
        for j in [0, DEG / 2, DEG - 1] {
            let s = ((j as f64 + 0.5) * PI / DEG as f64).cos();
            let x = mid + half * s;
            err = err.max((eval_panel(&values, a, b, x) - f(x)?).abs());
        }
        if err > tol && b - a > min_len {
            self.fill(f, a, mid, tol, min_len)?;
            self.fill(f, mid, b, tol, min_len)
        } else {
            self.values.push(values);
            self.breaks.push(b);
            Ok(())
        }
    }

    pub(crate) fn x_min(&self) -> f64 {
        self.breaks[0]
    }

    pub(crate) fn x_max(&self) -> f64 {
        *self.breaks.last().expect("at least one break")
    }

    pub(crate) fn panels(&self) -> usize {
        self.values.len()
    }

    /// Value at `x`, clamped to the end panels outside the table.
    pub(crate) fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_min(), self.x_max());
        let k = (self.breaks.partition_point(|&b| b <= x)).clamp(1, self.values.len()) - 1;
        eval_panel(&self.values[k], self.breaks[k], self.breaks[k + 1], x)
    }

    /// Slope at the left end, by a one-sided difference of the interpolant.
    pub(crate) fn slope_at_min(&self) -> f64 {
        let h = 1e-4 * (self.breaks[1] - self.breaks[0]);
        let x = self.x_min();
        (self.eval(x + h) - self.eval(x)) / h
    }
}
