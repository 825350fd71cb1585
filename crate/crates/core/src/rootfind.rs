//! All complex roots of a real univariate polynomial, via the eigenvalues of
//! its balanced companion matrix (Francis double-shift QR), then
//! Aberth-Ehrlich polishing on the original coefficients.

use num_complex::Complex;

use crate::error::{OdError, Result};
use crate::scalar::Real;

/// Leading coefficients below this fraction of the largest one are dropped.
pub const TRIM_REL: f64 = 1e-13;
const POLISH_STEPS: usize = 2;
const QR_MAX_ITS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root<T> {
    pub value: Complex<T>,
    /// Number of computed roots (itself included) within `1e-5·(1+|z|)`.
    pub multiplicity_hint: usize,
    /// `|p(z)| / Σ|cᵢ||z|ⁱ`.
    pub residual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootSet<T> {
    pub roots: Vec<Root<T>>,
    /// Real parts of the roots whose imaginary part passes the default filter.
    pub real_roots: Vec<T>,
    /// Degree after trimming.
    pub degree: usize,
    /// Largest coefficient magnitude of the input, used for normalisation.
    pub scale: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootFilter<T> {
    /// A root counts as real when `|Im z| ≤ tol_im·(1+|Re z|)`.
    pub tol_im: T,
    /// Real roots closer than `tol_dup·max(1,|x|)` are merged.
    pub tol_dup: T,
}

impl<T: Real> Default for RootFilter<T> {
    fn default() -> Self {
        RootFilter { tol_im: T::of(1e-7), tol_dup: T::of(1e-9) }
    }
}

fn eval_complex<T: Real>(c: &[T], z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let mut p = Complex::new(T::zero(), T::zero());
    let mut dp = p;
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + Complex::new(a, T::zero());
    }
    (p, dp)
}

fn residual<T: Real>(c: &[T], z: Complex<T>) -> T {
    let (p, _) = eval_complex(c, z);
    let zn = z.norm();
    let mut scale = T::zero();
    let mut pw = T::one();
    for &a in c {
        scale += a.abs() * pw;
        pw *= zn;
    }
    if scale > T::zero() {
        p.norm() / scale
    } else {
        p.norm()
    }
}

/// Roots of `Σ c[k] x^k`.
pub fn all_roots<T: Real>(c: &[T]) -> Result<RootSet<T>> {
    let scale = c.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if !(scale > T::zero()) {
        return Err(OdError::AllCoefficientsZero);
    }
    let norm: Vec<T> = c.iter().map(|&x| x / scale).collect();
    let n = norm.iter().rposition(|x| x.abs() > T::of(TRIM_REL)).unwrap_or(0);
    let norm = &norm[..=n];
    if n == 0 {
        return Ok(RootSet { roots: vec![], real_roots: vec![], degree: 0, scale });
    }

    let mut values = companion_eigenvalues(norm)?;
    // Aberth-Ehrlich sweeps: the repulsion term keeps clustered roots apart
    let mut res: Vec<T> = values.iter().map(|&z| residual(norm, z)).collect();
    for _ in 0..POLISH_STEPS {
        for k in 0..values.len() {
            let z = values[k];
            let (p, dp) = eval_complex(norm, z);
            if dp.norm() == T::zero() {
                continue;
            }
            let newton = p / dp;
            let mut repel = Complex::new(T::zero(), T::zero());
            for (j, &w) in values.iter().enumerate() {
                if j != k && w != z {
                    repel += (z - w).inv();
                }
            }
            let cand = z - newton / (Complex::new(T::one(), T::zero()) - newton * repel);
            let rc = residual(norm, cand);
            if rc.is_finite() && rc <= res[k] {
                values[k] = cand;
                res[k] = rc;
            }
        }
    }
    values.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal).then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal)));

    let roots: Vec<Root<T>> = values
        .iter()
        .map(|&z| {
            let near = T::of(1e-5) * (T::one() + z.norm());
            Root {
                value: z,
                multiplicity_hint: values.iter().filter(|w| (**w - z).norm() <= near).count(),
                residual: residual(norm, z),
            }
        })
        .collect();
    let filter = RootFilter::<T>::default();
    let real_roots = roots
        .iter()
        .filter(|r| r.value.im.abs() <= filter.tol_im * (T::one() + r.value.re.abs()))
        .map(|r| r.value.re)
        .collect();
    Ok(RootSet { roots, real_roots, degree: n, scale })
}

/// Positive real roots, sorted and de-duplicated.
pub fn filter_real_positive<T: Real>(rs: &RootSet<T>, f: &RootFilter<T>) -> Vec<T> {
    let mut xs: Vec<T> = rs
        .roots
        .iter()
        .filter(|r| r.value.im.abs() <= f.tol_im * (T::one() + r.value.re.abs()) && r.value.re > T::zero())
        .map(|r| r.value.re)
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<T> = Vec::with_capacity(xs.len());
    for x in xs {
        match out.last() {
            Some(&prev) if (x - prev).abs() <= f.tol_dup * T::one().max(x.abs()) => {}
            _ => out.push(x),
        }
    }
    out
}

/// Eigenvalues of the companion matrix of `c` (degree `n = c.len()-1 ≥ 1`).
fn companion_eigenvalues<T: Real>(c: &[T]) -> Result<Vec<Complex<T>>> {
    let n = c.len() - 1;
    let lead = c[n];
    // 1-based storage keeps the QR sweep close to its textbook form
    let mut a = vec![vec![T::zero(); n + 1]; n + 1];
    for j in 1..=n {
        a[1][j] = -c[n - j] / lead;
    }
    for i in 2..=n {
        a[i][i - 1] = T::one();
    }
    balance(&mut a, n);
    hqr(&mut a, n)
}

fn balance<T: Real>(a: &mut [Vec<T>], n: usize) {
    let radix = T::of(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let (mut r, mut c) = (T::zero(), T::zero());
            for j in 1..=n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let s = c + r;
                let mut f = T::one();
                let mut g = r / radix;
                while c < g {
                    f *= radix;
                    c *= sqrdx;
                }
                g = r * radix;
                while c > g {
                    f /= radix;
                    c /= sqrdx;
                }
                if (c + r) / f < T::of(0.95) * s {
                    done = false;
                    let gi = T::one() / f;
                    for j in 1..=n {
                        a[i][j] *= gi;
                    }
                    for j in 1..=n {
                        a[j][i] *= f;
                    }
                }
            }
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix (1-based, destroyed).
fn hqr<T: Real>(a: &mut [Vec<T>], n: usize) -> Result<Vec<Complex<T>>> {
    let mut out = Vec::with_capacity(n);
    let mut anorm = T::zero();
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let half = T::of(0.5);
    let mut nn = n as isize;
    let mut t = T::zero();
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = T::zero();
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                out.push(Complex::new(x + t, T::zero()));
                nn -= 1;
            } else {
                let mut y = a[nu - 1][nu - 1];
                let mut w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    let p = half * (y - x);
                    let q = p * p + w;
                    let z = q.abs().sqrt();
                    x += t;
                    if q >= T::zero() {
                        let z = p + z.copysign(p);
                        let r1 = x + z;
                        let r2 = if z != T::zero() { x - w / z } else { r1 };
                        out.push(Complex::new(r1, T::zero()));
                        out.push(Complex::new(r2, T::zero()));
                    } else {
                        out.push(Complex::new(x + p, z));
                        out.push(Complex::new(x + p, -z));
                    }
                    nn -= 2;
                } else {
                    if its == QR_MAX_ITS {
                        return Err(OdError::NoConvergence { what: "companion QR", iterations: its });
                    }
                    if its == 10 || its == 20 || its == 40 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nu {
                            a[i][i] -= x;
                        }
                        let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = T::of(0.75) * s;
                        y = x;
                        w = T::of(-0.4375) * s * s;
                    }
                    its += 1;
                    let (mut p, mut q, mut r);
                    let mut z;
                    let mut m = nu - 2;
                    loop {
                        z = a[m][m];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - rr - ss;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nu {
                        a[i][i - 2] = T::zero();
                        if i != m + 2 {
                            a[i][i - 3] = T::zero();
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = if k != nu - 1 { a[k + 2][k - 1] } else { T::zero() };
                            x = p.abs() + q.abs() + r.abs();
                            if x != T::zero() {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != T::zero() {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                let mut pp = a[k][j] + q * a[k + 1][j];
                                if k != nu - 1 {
                                    pp += r * a[k + 2][j];
                                    a[k + 2][j] -= pp * z;
                                }
                                a[k + 1][j] -= pp * y;
                                a[k][j] -= pp * x;
                            }
                            let mmin = nu.min(k + 3);
                            for i in l..=mmin {
                                let mut pp = x * a[i][k] + y * a[i][k + 1];
                                if k != nu - 1 {
                                    pp += z * a[i][k + 2];
                                    a[i][k + 2] -= pp * r;
                                }
                                a[i][k + 1] -= pp * q;
                                a[i][k] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if !((l as isize) < nn - 1) {
                break;
            }
        }
    }
    Ok(out)
}
