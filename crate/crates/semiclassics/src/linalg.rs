//! Thin wrappers over the LAPACK MRRR eigensolvers.

use lapack_sys::{dstevr_, dsyevr_, zheevr_};
use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex64;
use std::os::raw::{c_char, c_int};

use crate::error::{Error, Result};

/// Which part of the spectrum to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// The `k` lowest eigenpairs.
    Lowest(usize),
    /// Every eigenpair with eigenvalue `<= level`.
    AtMost(f64),
    All,
}

/// Eigenvalues in ascending order with vectors as columns (Euclidean norm 1).
#[derive(Debug, Clone)]
pub struct Eigen<T> {
    pub values: Vec<f64>,
    pub vectors: Array2<T>,
}

struct Range {
    code: u8,
    vl: f64,
    vu: f64,
    il: c_int,
    iu: c_int,
    max_m: usize,
}

fn range(sel: Selection, n: usize, lower: f64) -> Option<Range> {
    match sel {
        Selection::Lowest(0) => None,
        Selection::Lowest(k) => Some(Range {
            code: b'I',
            vl: 0.0,
            vu: 0.0,
            il: 1,
            iu: k.min(n) as c_int,
            max_m: k.min(n),
        }),
        Selection::AtMost(level) => {
            if level < lower {
                return None;
            }
            Some(Range {
                code: b'V',
                vl: lower - 1.0 - lower.abs() * 1e-8,
                vu: level,
                il: 1,
                iu: n as c_int,
                max_m: n,
            })
        }
        Selection::All => Some(Range {
            code: b'A',
            vl: 0.0,
            vu: 0.0,
            il: 1,
            iu: n as c_int,
            max_m: n,
        }),
    }
}

fn empty<T>(n: usize) -> Eigen<T> {
    Eigen {
        values: Vec::new(),
        vectors: Array2::from_shape_vec((n, 0).f(), Vec::new()).unwrap(),
    }
}

/// Number of eigenvalues below `sigma`, from the signs of the LDLᵀ pivots of T - σ.
fn sturm_count(diag: &[f64], off: &[f64], sigma: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &d) in diag.iter().enumerate() {
        let e2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
        q = d - sigma - if i > 0 { e2 / q } else { 0.0 };
        if q == 0.0 {
            q = -f64::EPSILON * (d.abs() + sigma.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Symmetric tridiagonal matrix with diagonal `diag` and off-diagonal `off`.
pub fn eigh_tridiagonal(diag: &[f64], off: &[f64], sel: Selection) -> Result<Eigen<f64>> {
    let n = diag.len();
    assert_eq!(off.len() + 1, n.max(1));
    if n == 0 {
        return Ok(empty(0));
    }
    // Gershgorin lower bound, used for value-range queries.
    let lower = (0..n)
        .map(|i| {
            let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let r = if i + 1 < n { off[i].abs() } else { 0.0 };
            diag[i] - l - r
        })
        .fold(f64::INFINITY, f64::min);
    let Some(mut r) = range(sel, n, lower) else {
        return Ok(empty(n));
    };
    if let Selection::AtMost(level) = sel {
        // size the eigenvector buffer by the Sturm count rather than n columns
        let sigma = level + 1e-8 * level.abs().max(lower.abs()).max(1.0);
        r.max_m = (sturm_count(diag, off, sigma) + 8).min(n);
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let ni = n as c_int;
    let mut m: c_int = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * r.max_m];
    let mut isuppz = vec![0 as c_int; 2 * r.max_m.max(1)];
    let lwork = 20 * n;
    let liwork = 10 * n;
    let mut work = vec![0.0; lwork];
    let mut iwork = vec![0 as c_int; liwork];
    let mut info: c_int = 0;
    unsafe {
        dstevr_(
            &(b'V' as c_char),
            &(r.code as c_char),
            &ni,
            d.as_mut_ptr(),
            e.as_mut_ptr(),
            &r.vl,
            &r.vu,
            &r.il,
            &r.iu,
            &0.0,
            &mut m,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            isuppz.as_mut_ptr(),
            work.as_mut_ptr(),
            &(lwork as c_int),
            iwork.as_mut_ptr(),
            &(liwork as c_int),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dstevr",
            info,
        });
    }
    let m = m as usize;
    w.truncate(m);
    z.truncate(n * m);
    Ok(Eigen {
        values: w,
        vectors: Array2::from_shape_vec((n, m).f(), z).unwrap(),
    })
}

fn gershgorin_dense<T: Copy>(a: &[T], n: usize, abs: impl Fn(T) -> f64, re: impl Fn(T) -> f64) -> f64 {
    (0..n)
        .map(|i| {
            let col = &a[i * n..(i + 1) * n];
            let off: f64 = col
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| abs(*v))
                .sum();
            re(col[i]) - off
        })
        .fold(f64::INFINITY, f64::min)
}

/// Dense real symmetric matrix, given column-major (upper triangle referenced).
pub fn eigh_symmetric(mut a: Vec<f64>, n: usize, sel: Selection) -> Result<Eigen<f64>> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok(empty(0));
    }
    let lower = gershgorin_dense(&a, n, f64::abs, |v| v);
    let Some(r) = range(sel, n, lower) else {
        return Ok(empty(n));
    };
    let ni = n as c_int;
    let mut m: c_int = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * r.max_m];
    let mut isuppz = vec![0 as c_int; 2 * n];
    let lwork = 40 * n;
    let liwork = 10 * n;
    let mut work = vec![0.0; lwork];
    let mut iwork = vec![0 as c_int; liwork];
    let mut info: c_int = 0;
    unsafe {
        dsyevr_(
            &(b'V' as c_char),
            &(r.code as c_char),
            &(b'U' as c_char),
            &ni,
            a.as_mut_ptr(),
            &ni,
            &r.vl,
            &r.vu,
            &r.il,
            &r.iu,
            &0.0,
            &mut m,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            isuppz.as_mut_ptr(),
            work.as_mut_ptr(),
            &(lwork as c_int),
            iwork.as_mut_ptr(),
            &(liwork as c_int),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dsyevr",
            info,
        });
    }
    let m = m as usize;
    w.truncate(m);
    z.truncate(n * m);
    Ok(Eigen {
        values: w,
        vectors: Array2::from_shape_vec((n, m).f(), z).unwrap(),
    })
}

/// Dense Hermitian matrix, given column-major (upper triangle referenced).
pub fn eigh_hermitian(mut a: Vec<Complex64>, n: usize, sel: Selection) -> Result<Eigen<Complex64>> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok(empty(0));
    }
    let lower = gershgorin_dense(&a, n, |v| v.norm(), |v| v.re);
    let Some(r) = range(sel, n, lower) else {
        return Ok(empty(n));
    };
    let ni = n as c_int;
    let mut m: c_int = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![Complex64::new(0.0, 0.0); n * r.max_m];
    let mut isuppz = vec![0 as c_int; 2 * n];
    let lwork = 65 * n;
    let lrwork = 24 * n;
    let liwork = 10 * n;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork];
    let mut rwork = vec![0.0; lrwork];
    let mut iwork = vec![0 as c_int; liwork];
    let mut info: c_int = 0;
    unsafe {
        zheevr_(
            &(b'V' as c_char),
            &(r.code as c_char),
            &(b'U' as c_char),
            &ni,
            a.as_mut_ptr() as *mut _,
            &ni,
            &r.vl,
            &r.vu,
            &r.il,
            &r.iu,
            &0.0,
            &mut m,
            w.as_mut_ptr(),
            z.as_mut_ptr() as *mut _,
            &ni,
            isuppz.as_mut_ptr(),
            work.as_mut_ptr() as *mut _,
            &(lwork as c_int),
            rwork.as_mut_ptr(),
            &(lrwork as c_int),
            iwork.as_mut_ptr(),
            &(liwork as c_int),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "zheevr",
            info,
        });
    }
    let m = m as usize;
    w.truncate(m);
    z.truncate(n * m);
    Ok(Eigen {
        values: w,
        vectors: Array2::from_shape_vec((n, m).f(), z).unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_discrete_sine_spectrum() {
        let n = 64;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let eig = eigh_tridiagonal(&diag, &off, Selection::Lowest(5)).unwrap();
        let level = 0.5 * (eig.values[2] + eig.values[3]);
        for (k, v) in eig.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13);
        }
        let below = eigh_tridiagonal(&diag, &off, Selection::AtMost(level)).unwrap();
        assert_eq!(below.values.len(), 3);
    }

    #[test]
    fn sturm_count_matches_closed_form() {
        let n = 200;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        for sigma in [-1.0, 0.01, 0.5, 1.3, 3.99, 5.0] {
            let exact = (1..=n)
                .filter(|&k| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / (n + 1) as f64).cos() < sigma)
                .count();
            assert_eq!(sturm_count(&diag, &off, sigma), exact, "sigma = {sigma}");
        }
    }

    #[test]
    fn hermitian_and_symmetric_agree_on_real_input() {
        let n = 6;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i + j * n] = 1.0 / (1.0 + (i + j) as f64) + if i == j { i as f64 } else { 0.0 };
            }
        }
        let c: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let s = eigh_symmetric(a, n, Selection::All).unwrap();
        let h = eigh_hermitian(c, n, Selection::All).unwrap();
        for (x, y) in s.values.iter().zip(&h.values) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(eigh_symmetric(vec![1.0; 4], 2, Selection::AtMost(-5.0)).unwrap().values.is_empty());
    }
}
