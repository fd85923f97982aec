//! Small dense matrix helpers over integers, rationals and floats.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::scalar::{from_usize, Scalar};

/// Square non-negative integer matrix, row-major.
pub type IntMatrix = Vec<Vec<u64>>;

pub fn mat_mul(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let rows = a.len();
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    let mut out = vec![vec![0u64; cols]; rows];
    for i in 0..rows {
        for k in 0..inner {
            if a[i][k] == 0 {
                continue;
            }
            for j in 0..cols {
                out[i][j] = out[i][j].saturating_add(a[i][k].saturating_mul(b[k][j]));
            }
        }
    }
    out
}

pub fn is_positive(m: &IntMatrix) -> bool {
    m.iter().all(|r| r.iter().all(|&x| x > 0))
}

/// Least n ≤ bound with mⁿ entrywise positive.
pub fn positivity_exponent(m: &IntMatrix, bound: usize) -> Option<usize> {
    // only the zero pattern matters
    let pattern: IntMatrix = m.iter().map(|r| r.iter().map(|&x| u64::from(x > 0)).collect()).collect();
    let mut p = pattern.clone();
    for n in 1..=bound {
        if is_positive(&p) {
            return Some(n);
        }
        p = mat_mul(&p, &pattern)
            .into_iter()
            .map(|r| r.into_iter().map(|x| u64::from(x > 0)).collect())
            .collect();
    }
    None
}

/// Kernel of an n×n rational matrix when it is one-dimensional.
pub fn rational_kernel_line(m: &[Vec<BigRational>]) -> Option<Vec<BigRational>> {
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m.to_vec();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !a[r][col].is_zero()) else { continue };
        a.swap(row, p);
        let inv = a[row][col].recip();
        for x in a[row].iter_mut() {
            *x = &*x * &inv;
        }
        for r in 0..n {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..n {
                    let v = &a[row][c] * &f;
                    a[r][c] -= v;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if pivots.len() + 1 != n {
        return None;
    }
    let free = (0..n).find(|c| !pivots.contains(c))?;
    let mut v = vec![BigRational::zero(); n];
    v[free] = BigRational::one();
    for (r, &pc) in pivots.iter().enumerate() {
        v[pc] = -a[r][free].clone();
    }
    Some(v)
}

/// Exact Perron data (λ, v) with M v = λ v, v normalized to sum 1, if λ is an integer.
pub fn exact_perron_right(m: &IntMatrix) -> Option<(u64, Vec<BigRational>)> {
    let n = m.len();
    let col_sums: Vec<u64> = (0..n).map(|j| (0..n).map(|i| m[i][j]).sum()).collect();
    let lo = *col_sums.iter().min()?;
    let hi = *col_sums.iter().max()?;
    for lambda in lo..=hi {
        let shifted: Vec<Vec<BigRational>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = if i == j { lambda } else { 0 };
                        BigRational::from_integer(BigInt::from(m[i][j]) - BigInt::from(d))
                    })
                    .collect()
            })
            .collect();
        if let Some(v) = rational_kernel_line(&shifted) {
            let sum: BigRational = v.iter().cloned().sum();
            if sum.is_zero() {
                continue;
            }
            let v: Vec<BigRational> = v.into_iter().map(|x| x / &sum).collect();
            if v.iter().all(|x| x > &BigRational::zero()) {
                return Some((lambda, v));
            }
        }
    }
    None
}

pub fn transpose(m: &IntMatrix) -> IntMatrix {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| (0..rows).map(|i| m[i][j]).collect()).collect()
}

/// Perron eigenvalue and right eigenvector (sum 1) by power iteration on M + I.
/// Returns the final residual |Mv − λv|_∞ alongside.
pub fn float_perron_right<F: Scalar>(m: &IntMatrix, max_iter: usize) -> (F, Vec<F>, F) {
    let n = m.len();
    let mf: Vec<Vec<F>> = m.iter().map(|r| r.iter().map(|&x| F::from_u64(x).expect("entry fits")).collect()).collect();
    let mut v = vec![F::one() / from_usize::<F>(n); n];
    let apply = |v: &[F]| -> Vec<F> {
        (0..n).map(|i| (0..n).fold(F::zero(), |acc, j| acc + mf[i][j] * v[j])).collect()
    };
    let residual = |v: &[F]| -> (F, F) {
        let mv = apply(v);
        let total = mv.iter().fold(F::zero(), |a, &x| a + x);
        let lambda = total / v.iter().fold(F::zero(), |a, &x| a + x);
        let r = mv.iter().zip(v).fold(F::zero(), |a, (&x, &y)| a.max((x - lambda * y).abs()));
        (lambda, r)
    };
    let target = F::target_residual();
    for _ in 0..max_iter {
        let mv = apply(&v);
        let next: Vec<F> = mv.iter().zip(&v).map(|(&x, &y)| x + y).collect();
        let s = next.iter().fold(F::zero(), |a, &x| a + x);
        v = next.into_iter().map(|x| x / s).collect();
        if residual(&v).1 < target {
            break;
        }
    }
    let (lambda, r) = residual(&v);
    (lambda, v, r)
}
