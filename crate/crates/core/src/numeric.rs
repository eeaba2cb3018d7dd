//! Double-double accumulation (an unevaluated sum `hi + lo`).
//!
//! Used where two estimates of the same bins must keep their mathematical
//! ordering after rounding, such as RMS against l1.

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct DoubleDouble {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    fn add_parts(&mut self, hi: f64, lo: f64) {
        let (s, e) = two_sum(self.hi, hi);
        let (h, l) = quick_two_sum(s, e + self.lo + lo);
        self.hi = h;
        self.lo = l;
    }

    /// Adds `count * x`.
    pub(crate) fn add_scaled(&mut self, count: usize, x: f64) {
        let (p, e) = two_prod(count as f64, x);
        self.add_parts(p, e);
    }

    /// Adds `count * x * x`.
    pub(crate) fn add_scaled_square(&mut self, count: usize, x: f64) {
        let c = count as f64;
        let (q, qe) = two_prod(x, x);
        let (p, pe) = two_prod(c, q);
        self.add_parts(p, pe + c * qe);
    }

    pub(crate) fn div_count(self, n: usize) -> Self {
        let d = n as f64;
        let q1 = self.hi / d;
        let (p, pe) = two_prod(q1, d);
        let q2 = ((self.hi - p) - pe + self.lo) / d;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo }
    }

    pub(crate) fn sqrt(self) -> f64 {
        if self.hi <= 0.0 {
            return 0.0;
        }
        let r = self.hi.sqrt();
        let (p, pe) = two_prod(r, r);
        r + ((self.hi - p) - pe + self.lo) / (2.0 * r)
    }

    pub(crate) fn value(self) -> f64 {
        self.hi + self.lo
    }
}
