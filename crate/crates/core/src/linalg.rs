//! Small fixed-dimension vector and symmetric-matrix helpers.
//!
//! Points are plain `[f64; D]` arrays and matrices `[[f64; D]; D]`; the
//! dimensions in play are 2 and 3, so hand-rolled Jacobi/Cholesky beat
//! pulling in a linear-algebra crate.

pub type Vector<const D: usize> = [f64; D];
pub type Matrix<const D: usize> = [[f64; D]; D];

#[inline]
pub fn add<const D: usize>(a: Vector<D>, b: Vector<D>) -> Vector<D> {
    std::array::from_fn(|i| a[i] + b[i])
}

#[inline]
pub fn sub<const D: usize>(a: Vector<D>, b: Vector<D>) -> Vector<D> {
    std::array::from_fn(|i| a[i] - b[i])
}

#[inline]
pub fn scale<const D: usize>(a: Vector<D>, s: f64) -> Vector<D> {
    std::array::from_fn(|i| a[i] * s)
}

#[inline]
pub fn dot<const D: usize>(a: Vector<D>, b: Vector<D>) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm_sq<const D: usize>(a: Vector<D>) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm<const D: usize>(a: Vector<D>) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist<const D: usize>(a: Vector<D>, b: Vector<D>) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn dist_sq<const D: usize>(a: Vector<D>, b: Vector<D>) -> f64 {
    norm_sq(sub(a, b))
}

#[inline]
pub fn zero<const D: usize>() -> Vector<D> {
    [0.0; D]
}

#[inline]
pub fn identity<const D: usize>() -> Matrix<D> {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
}

#[inline]
pub fn scalar_matrix<const D: usize>(c: f64) -> Matrix<D> {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { c } else { 0.0 }))
}

#[inline]
pub fn mat_vec<const D: usize>(m: &Matrix<D>, v: Vector<D>) -> Vector<D> {
    std::array::from_fn(|i| dot(m[i], v))
}

/// Quadratic form ⟨Mξ, ξ⟩.
#[inline]
pub fn quad_form<const D: usize>(m: &Matrix<D>, xi: Vector<D>) -> f64 {
    dot(mat_vec(m, xi), xi)
}

pub fn max_abs_entry<const D: usize>(m: &Matrix<D>) -> f64 {
    let mut best = 0.0_f64;
    for row in m {
        for &v in row {
            best = best.max(v.abs());
        }
    }
    best
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<const D: usize>(m: &Matrix<D>) -> Vector<D> {
    let mut a = *m;
    for _ in 0..64 {
        let mut off = 0.0;
        for p in 0..D {
            for q in (p + 1)..D {
                off += a[p][q] * a[p][q];
            }
        }
        if off <= 1e-30 * (1.0 + max_abs_entry(&a).powi(2)) {
            break;
        }
        for p in 0..D {
            for q in (p + 1)..D {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..D {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..D {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vector<D> = std::array::from_fn(|i| a[i][i]);
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Cholesky factor L (lower triangular, LLᵀ = M); `None` if M is not
/// positive-definite.
pub fn cholesky<const D: usize>(m: &Matrix<D>) -> Option<Matrix<D>> {
    let mut l = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solve L w = v for lower-triangular L (forward substitution).
pub fn forward_solve<const D: usize>(l: &Matrix<D>, v: Vector<D>) -> Vector<D> {
    let mut w = [0.0; D];
    for i in 0..D {
        let mut s = v[i];
        for k in 0..i {
            s -= l[i][k] * w[k];
        }
        w[i] = s / l[i][i];
    }
    w
}

/// Volume of the d-dimensional unit ball.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => {
            // Γ-free recursion ω_d = 2π/d · ω_{d−2}
            let mut v = if d % 2 == 0 {
                std::f64::consts::PI
            } else {
                2.0
            };
            let mut k = if d % 2 == 0 { 2 } else { 1 };
            while k < d {
                k += 2;
                v *= 2.0 * std::f64::consts::PI / k as f64;
            }
            v
        }
    }
}
