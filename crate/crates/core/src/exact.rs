//! Order-independent exact summation.
//!
//! Losses and gradients are means over batch rows, and the contract for
//! them is strict: permuting rows, or duplicating every row, must leave the
//! result bit-identical. No left-to-right float accumulation can deliver
//! that, so batch reductions run through a Shewchuk-style expansion
//! accumulator ([`ExactSum`]) whose final value is the correctly rounded
//! sum of its inputs. Correct rounding makes the result a function of the
//! exact real sum, hence independent of accumulation order, and doubling
//! every addend exactly doubles it.

/// Accumulates f64 values and reports their correctly rounded sum.
///
/// Internally keeps the running sum as a list of non-overlapping partials
/// (an error-free expansion). `add` is exact; rounding happens once, in
/// [`ExactSum::value`].
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self { partials: Vec::with_capacity(4) }
    }

    /// Adds `x` to the running sum without rounding error.
    pub fn add(&mut self, mut x: f64) {
        debug_assert!(x.is_finite(), "ExactSum::add requires finite inputs");
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// The correctly rounded value of everything added so far.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round-half-even correction: if the discarded tail and the next
        // partial push in the same direction, the naive sum sits exactly on
        // a rounding boundary and must be nudged.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }

    /// Clears the accumulator for reuse without releasing its storage.
    pub fn reset(&mut self) {
        self.partials.clear();
    }
}

/// Correctly rounded sum of an iterator of finite values.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}
