//! Independent reference computations used only by tests.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Double-double number: `hi + lo` with |lo| ≤ ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub(crate) fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub(crate) fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub(crate) fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    pub(crate) fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub(crate) fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub(crate) fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    pub(crate) fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        Dd::from(q1).add(Dd::from(q2)).add(Dd::from(q3))
    }

    pub(crate) fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::default();
        }
        let x = Dd::from(libm::sqrt(self.hi));
        // one Newton step: x + (a - x²) / 2x
        let r = self.sub(x.mul(x));
        x.add(r.div(Dd::from(2.0).mul(x)))
    }
}

/// Minimum-norm solution `Jᵀ (J Jᵀ)⁻¹ e` via Gaussian elimination carried
/// out in double-double arithmetic.
pub(crate) fn min_norm_solve(j: &DMatrix<f64>, e: &DVector<f64>) -> DVector<f64> {
    let (m, n) = j.shape();
    let mut a: Vec<Vec<Dd>> = vec![vec![Dd::default(); m + 1]; m];
    for r in 0..m {
        for c in 0..m {
            let mut acc = Dd::default();
            for k in 0..n {
                acc = acc.add(Dd::from(j[(r, k)]).mul(Dd::from(j[(c, k)])));
            }
            a[r][c] = acc;
        }
        a[r][m] = Dd::from(e[r]);
    }
    for col in 0..m {
        let pivot = (col..m).max_by(|&x, &y| a[x][col].hi.abs().total_cmp(&a[y][col].hi.abs())).unwrap();
        a.swap(col, pivot);
        for r in col + 1..m {
            let f = a[r][col].div(a[col][col]);
            for c in col..=m {
                let v = a[col][c];
                a[r][c] = a[r][c].sub(f.mul(v));
            }
        }
    }
    let mut y = vec![Dd::default(); m];
    for r in (0..m).rev() {
        let mut acc = a[r][m];
        for c in r + 1..m {
            acc = acc.sub(a[r][c].mul(y[c]));
        }
        y[r] = acc.div(a[r][r]);
    }
    DVector::from_fn(n, |k, _| {
        let mut acc = Dd::default();
        for r in 0..m {
            acc = acc.add(Dd::from(j[(r, k)]).mul(y[r]));
        }
        acc.to_f64()
    })
}
