//! Full eigendecomposition of dense real symmetric matrices.
//!
//! Two independent solvers are provided.  [`EigenMethod::Tridiagonal`]
//! reduces to tridiagonal form with Householder reflections and then runs
//! implicit QL with Wilkinson shifts; it is the default because it is
//! several times faster on the few-hundred-row matrices the spectral engine
//! builds.  [`EigenMethod::Jacobi`] is the classic cyclic Jacobi rotation
//! scheme: slower, but simple and very accurate, and used to cross-check
//! the default.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Tridiagonal,
    Jacobi,
}

/// Eigenpairs sorted by descending eigenvalue; column `i` of `vectors` is
/// the unit eigenvector for `values[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// `max_i ||G v_i - s_i v_i||`.
    pub fn max_residual(&self, g: &DMatrix<f64>) -> f64 {
        (0..self.values.len())
            .map(|i| {
                let v = self.vectors.column(i);
                (g * v - v * self.values[i]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `V diag(s) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, s) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        if n == 0 {
            return DMatrix::zeros(0, 0);
        }
        &scaled * self.vectors.transpose()
    }
}

pub fn sym_eigendecomp(g: &DMatrix<f64>) -> Result<SymmetricEigen> {
    sym_eigendecomp_with(g, EigenMethod::default())
}

pub fn sym_eigendecomp_with(g: &DMatrix<f64>, method: EigenMethod) -> Result<SymmetricEigen> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::Dimension { expected: n, got: g.ncols() });
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(SymmetricEigen { values: vec![], vectors: DMatrix::zeros(0, 0) });
    }
    // work on the symmetric part; row-major, a[r * n + c]
    let mut a = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            a[r * n + c] = 0.5 * (g[(r, c)] + g[(c, r)]);
        }
    }
    let (values, vectors_rows) = match method {
        EigenMethod::Tridiagonal => tridiagonal_ql(a, n)?,
        EigenMethod::Jacobi => jacobi(a, n)?,
    };
    Ok(sorted(values, vectors_rows, n))
}

/// Sorts descending and fixes each vector's sign so its largest-magnitude
/// entry is positive.  `rows[i]` holds eigenvector `i`.
fn sorted(values: Vec<f64>, rows: Vec<f64>, n: usize) -> SymmetricEigen {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let mut vectors = DMatrix::zeros(n, n);
    let mut out = Vec::with_capacity(n);
    for (col, &i) in order.iter().enumerate() {
        let v = &rows[i * n..(i + 1) * n];
        let mut pivot = 0;
        for k in 1..n {
            if v[k].abs() > v[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[(k, col)] = sign * v[k];
        }
        out.push(values[i]);
    }
    SymmetricEigen { values: out, vectors }
}

fn tridiagonal_ql(mut v: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    householder_tridiagonalize(&mut v, &mut d, &mut e, n);
    // transpose so that row i accumulates eigenvector i
    let mut z = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            z[c * n + r] = v[r * n + c];
        }
    }
    implicit_ql(&mut z, &mut d, &mut e, n)?;
    Ok((d, z))
}

/// Householder reduction to tridiagonal form, accumulating the orthogonal
/// transform in `v` (columns).  On return `d` is the diagonal and `e[1..]`
/// the subdiagonal.
fn householder_tridiagonalize(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    let at = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

const QL_MAX_ITERS: usize = 60;

/// Implicit QL on the tridiagonal `(d, e)`; `z` rows are rotated along.
fn implicit_ql(z: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITERS {
                    return Err(Error::EigenNoConvergence { sweeps: iter, residual: e[l].abs() });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zi1 = &mut hi[..n];
                    for k in 0..n {
                        let t = zi1[k];
                        zi1[k] = s * zi[k] + c * t;
                        zi[k] = c * zi[k] - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi.  Stops once the off-diagonal Frobenius norm is below
/// `1e-10 * ||A||_F`, then polishes with one more sweep.
fn jacobi(mut a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let at = |r: usize, c: usize| r * n + c;
    // rows of `v` are the eigenvectors
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[at(i, i)] = 1.0;
    }
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-10 * frob;
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                s += 2.0 * a[at(r, c)] * a[at(r, c)];
            }
        }
        s.sqrt()
    };
    let mut polished = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let residual = off(&a);
        if residual <= tol {
            if polished || residual == 0.0 {
                let values = (0..n).map(|i| a[at(i, i)]).collect();
                return Ok((values, v));
            }
            polished = true;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[at(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[at(p, p)];
                let aqq = a[at(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/cols p, q
                for k in 0..n {
                    let akp = a[at(k, p)];
                    let akq = a[at(k, q)];
                    a[at(k, p)] = c * akp - s * akq;
                    a[at(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[at(p, k)];
                    let aqk = a[at(q, k)];
                    a[at(p, k)] = c * apk - s * aqk;
                    a[at(q, k)] = s * apk + c * aqk;
                }
                a[at(p, q)] = 0.0;
                a[at(q, p)] = 0.0;
                for k in 0..n {
                    let vp = v[at(p, k)];
                    let vq = v[at(q, k)];
                    v[at(p, k)] = c * vp - s * vq;
                    v[at(q, k)] = s * vp + c * vq;
                }
            }
        }
    }
    Err(Error::EigenNoConvergence { sweeps: JACOBI_MAX_SWEEPS, residual: off(&a) })
}
