//! Thin QR factorization by Householder reflections.

use ndarray::{Array2, ArrayView2};

/// Thin QR factors of a tall `rows × cols` matrix (`rows >= cols`).
#[derive(Debug, Clone)]
pub struct ThinQr {
    /// `rows × cols`, orthonormal columns.
    pub q: Array2<f64>,
    /// `cols × cols`, upper triangular.
    pub r: Array2<f64>,
}

/// Householder QR of `a`. Panics if `a` is wider than it is tall.
///
/// Reflector `k` maps column `k` (rows `k..`) onto `-sign(a_kk)·‖x‖·e_k`,
/// which avoids cancellation; the diagonal of `R` may therefore carry
/// either sign.
pub fn householder_qr(a: ArrayView2<'_, f64>) -> ThinQr {
    let (m, n) = a.dim();
    assert!(m >= n, "thin QR needs rows >= cols, got {m}x{n}");

    // Work column-major: column j lives at w[j*m .. (j+1)*m].
    let mut w = vec![0.0; m * n];
    for ((i, j), &x) in a.indexed_iter() {
        w[j * m + i] = x;
    }

    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    for k in 0..n {
        let col = &w[k * m + k..(k + 1) * m];
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let x0 = col[0];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = col.to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };

        // Column k becomes (alpha, 0, ..., 0).
        {
            let colk = &mut w[k * m + k..(k + 1) * m];
            colk[0] = alpha;
            colk[1..].iter_mut().for_each(|x| *x = 0.0);
        }
        if beta != 0.0 {
            for j in k + 1..n {
                let colj = &mut w[j * m + k..(j + 1) * m];
                let dot: f64 = v.iter().zip(colj.iter()).map(|(a, b)| a * b).sum();
                let s = beta * dot;
                colj.iter_mut().zip(&v).for_each(|(c, vi)| *c -= s * vi);
            }
        }
        vs.push(v);
        betas.push(beta);
    }

    let mut r = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..=j {
            r[[i, j]] = w[j * m + i];
        }
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut qc = vec![0.0; m * n];
    for j in 0..n {
        qc[j * m + j] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &vs[k];
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        for j in 0..n {
            let colj = &mut qc[j * m + k..(j + 1) * m];
            let dot: f64 = v.iter().zip(colj.iter()).map(|(a, b)| a * b).sum();
            if dot != 0.0 {
                let s = beta * dot;
                colj.iter_mut().zip(v).for_each(|(c, vi)| *c -= s * vi);
            }
        }
    }
    let q = Array2::from_shape_fn((m, n), |(i, j)| qc[j * m + i]);
    ThinQr { q, r }
}

/// Frobenius norm of `a - b`.
pub fn frobenius_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
