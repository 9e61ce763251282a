//! Real Schur form with eigenvalue reordering.
//!
//! The decomposition itself is Hessenberg reduction followed by a Francis
//! double-shift QR iteration with exceptional shifts. Replicated spectra
//! are routine here (ensemble problems stack identical agents), and the
//! off-the-shelf iteration stalls on exactly those inputs, so the sweep is
//! implemented locally. On top of the factorization: partitioning of the
//! quasi-triangular factor into 1x1/2x2 blocks, splitting of 2x2 blocks
//! that carry real eigenvalue pairs, and adjacent-block swaps (Sylvester
//! solve + QR completion) to reorder selected eigenvalues to the front.

use super::{kron, Mat};
use crate::error::{Error, Result};

/// Householder data for a 2- or 3-element reflector.
fn small_householder(col: &[f64]) -> Option<([f64; 3], f64)> {
    let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let sign = if col[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = [0.0; 3];
    v[..col.len()].copy_from_slice(col);
    v[0] += sign * norm;
    let vnorm2: f64 = v.iter().map(|x| x * x).sum();
    if vnorm2 == 0.0 {
        return None;
    }
    Some((v, 2.0 / vnorm2))
}

/// Francis double-shift QR on an upper Hessenberg `h`, accumulating the
/// similarity into `z`. Converges `h` to real quasi-triangular form.
fn francis_iteration(h: &mut Mat, z: &mut Mat) -> Result<()> {
    let n = h.nrows();
    if n <= 2 {
        return Ok(());
    }
    let hnorm = h.norm().max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut block_iter = 0usize;
    let mut total = 0usize;
    let max_total = 90 * n;

    while hi > 0 {
        // deflation scan within the active window
        let mut l = hi;
        while l > 0 {
            let s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            let s = if s == 0.0 { hnorm } else { s };
            if h[(l, l - 1)].abs() <= eps * s {
                h[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            block_iter = 0;
            continue;
        }
        if l + 1 == hi {
            if hi < 2 {
                break;
            }
            hi -= 2;
            block_iter = 0;
            continue;
        }

        block_iter += 1;
        total += 1;
        if total > max_total {
            return Err(Error::Inconsistent(
                "real Schur: Francis iteration exceeded its sweep budget".into(),
            ));
        }

        // double shift from the trailing 2x2, replaced by the classical
        // synthetic block on every tenth sweep to break cycles
        let m = hi - 1;
        let (ssum, sprod) = if block_iter.is_multiple_of(10) {
            let s = h[(hi, m)].abs() + h[(m, hi - 2)].abs();
            let h11 = 0.75 * s + h[(hi, hi)];
            let h12 = -0.4375 * s;
            (2.0 * h11, h11 * h11 - h12 * s)
        } else {
            (
                h[(m, m)] + h[(hi, hi)],
                h[(m, m)] * h[(hi, hi)] - h[(m, hi)] * h[(hi, m)],
            )
        };

        // first column of (H - aI)(H - bI) e1 on the window
        let mut x =
            h[(l, l)] * h[(l, l)] + h[(l, l + 1)] * h[(l + 1, l)] - ssum * h[(l, l)] + sprod;
        let mut y = h[(l + 1, l)] * (h[(l, l)] + h[(l + 1, l + 1)] - ssum);
        let mut w = h[(l + 2, l + 1)] * h[(l + 1, l)];

        for k in l..hi {
            let nr = (hi - k + 1).min(3);
            if nr < 2 {
                break;
            }
            let col = if nr == 3 { vec![x, y, w] } else { vec![x, y] };
            if let Some((v, beta)) = small_householder(&col) {
                let col_lo = if k > l { k - 1 } else { l };
                for j in col_lo..n {
                    let mut dot = 0.0;
                    for i in 0..nr {
                        dot += v[i] * h[(k + i, j)];
                    }
                    dot *= beta;
                    for i in 0..nr {
                        h[(k + i, j)] -= dot * v[i];
                    }
                }
                let row_hi = (k + nr).min(hi);
                for i in 0..=row_hi {
                    let mut dot = 0.0;
                    for (jj, vj) in v.iter().enumerate().take(nr) {
                        dot += h[(i, k + jj)] * vj;
                    }
                    dot *= beta;
                    for (jj, vj) in v.iter().enumerate().take(nr) {
                        h[(i, k + jj)] -= dot * vj;
                    }
                }
                for i in 0..n {
                    let mut dot = 0.0;
                    for (jj, vj) in v.iter().enumerate().take(nr) {
                        dot += z[(i, k + jj)] * vj;
                    }
                    dot *= beta;
                    for (jj, vj) in v.iter().enumerate().take(nr) {
                        z[(i, k + jj)] -= dot * vj;
                    }
                }
            }
            if k < hi - 1 {
                x = h[(k + 1, k)];
                y = h[(k + 2, k)];
                w = if k + 3 <= hi { h[(k + 3, k)] } else { 0.0 };
            }
        }
        // the chase restores Hessenberg form up to roundoff below the
        // subdiagonal; flush it
        for i in l + 2..=hi {
            for j in l..i - 1 {
                h[(i, j)] = 0.0;
            }
        }
    }
    Ok(())
}

/// Real Schur decomposition `a = q t q'` with orthogonal `q` and real
/// quasi-upper-triangular `t`.
pub(crate) fn real_schur(a: &Mat) -> Result<(Mat, Mat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), Mat::zeros(0, 0)));
    }
    if n == 1 {
        return Ok((Mat::identity(1, 1), a.clone()));
    }
    let (q, mut t) = a.clone().hessenberg().unpack();
    let mut z = q;
    francis_iteration(&mut t, &mut z)?;
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            t[(i, j)] = 0.0;
        }
    }
    Ok((z, t))
}

pub(crate) struct BlockInfo {
    pub start: usize,
    pub size: usize,
}

/// Partition a quasi-upper-triangular `t` into diagonal blocks. Subdiagonal
/// entries at ulp level relative to their neighbours are flushed to zero.
pub(crate) fn block_partition(t: &mut Mat) -> Vec<BlockInfo> {
    let n = t.nrows();
    for k in 0..n.saturating_sub(1) {
        let thr = f64::EPSILON * (t[(k, k)].abs() + t[(k + 1, k + 1)].abs() + 1e-300);
        if t[(k + 1, k)].abs() <= thr {
            t[(k + 1, k)] = 0.0;
        }
    }
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < n {
        let size = if k + 1 < n && t[(k + 1, k)] != 0.0 {
            2
        } else {
            1
        };
        blocks.push(BlockInfo { start: k, size });
        k += size;
    }
    blocks
}

/// Real part shared by the eigenvalue(s) of the block at `b`.
pub(crate) fn block_re(t: &Mat, b: &BlockInfo) -> f64 {
    if b.size == 1 {
        t[(b.start, b.start)]
    } else {
        0.5 * (t[(b.start, b.start)] + t[(b.start + 1, b.start + 1)])
    }
}

/// Rotate a 2x2 block with real eigenvalues into triangular form so that
/// every remaining 2x2 block carries a genuine complex pair.
fn split_real_blocks(t: &mut Mat, q: &mut Mat) {
    let n = t.nrows();
    let mut k = 0;
    while k + 1 < n {
        if t[(k + 1, k)] == 0.0 {
            k += 1;
            continue;
        }
        let (a, b) = (t[(k, k)], t[(k, k + 1)]);
        let (c, d) = (t[(k + 1, k)], t[(k + 1, k + 1)]);
        let disc = (a - d) * (a - d) + 4.0 * b * c;
        if disc < 0.0 {
            k += 2;
            continue;
        }
        let mid = 0.5 * (a + d);
        let rad = 0.5 * disc.sqrt();
        let lambda = if mid >= 0.0 { mid + rad } else { mid - rad };
        // eigenvector of [[a,b],[c,d]] for lambda; pick the better-conditioned form
        let (v0, v1) = if b.abs() + (lambda - a).abs() >= c.abs() + (lambda - d).abs() {
            (b, lambda - a)
        } else {
            (lambda - d, c)
        };
        let nv = (v0 * v0 + v1 * v1).sqrt();
        let (v0, v1) = if nv > 0.0 {
            (v0 / nv, v1 / nv)
        } else {
            (1.0, 0.0)
        };
        let rot = Mat::from_row_slice(2, 2, &[v0, -v1, v1, v0]);
        apply_block_transform(t, q, k, &rot);
        t[(k + 1, k)] = 0.0;
        k += 2;
    }
}

/// Similarity-transform rows/columns `[k, k+w)` of `t` by the orthogonal
/// `g` (w x w) and accumulate it into `q`.
fn apply_block_transform(t: &mut Mat, q: &mut Mat, k: usize, g: &Mat) {
    let n = t.nrows();
    let w = g.nrows();
    let rows = g.transpose() * t.view((k, 0), (w, n));
    t.view_mut((k, 0), (w, n)).copy_from(&rows);
    let cols = t.view((0, k), (n, w)) * g;
    t.view_mut((0, k), (n, w)).copy_from(&cols);
    let qc = q.view((0, k), (n, w)) * g;
    q.view_mut((0, k), (n, w)).copy_from(&qc);
}

/// Gram-Schmidt completion: the columns of `w` (assumed independent) are
/// orthonormalized and extended to a full orthonormal basis of R^dim.
fn orthonormal_completion(w: &Mat) -> Result<Mat> {
    let dim = w.nrows();
    let mut basis: Vec<Mat> = Vec::with_capacity(dim);
    let push = |cand: Mat, basis: &mut Vec<Mat>, required: bool| -> Result<()> {
        let mut v = cand;
        for _ in 0..2 {
            let projections: Vec<(f64, usize)> = basis
                .iter()
                .enumerate()
                .map(|(i, b)| ((b.transpose() * &v)[(0, 0)], i))
                .collect();
            for (p, i) in projections {
                v -= &basis[i] * p;
            }
        }
        let nv = v.norm();
        if nv > 1e-10 {
            basis.push(v / nv);
        } else if required {
            return Err(Error::Inconsistent(
                "schur reorder: dependent subspace basis".into(),
            ));
        }
        Ok(())
    };
    for j in 0..w.ncols() {
        push(
            w.column(j)
                .clone_owned()
                .reshape_generic(nalgebra::Dyn(dim), nalgebra::Dyn(1)),
            &mut basis,
            true,
        )?;
    }
    let mut j = 0;
    while basis.len() < dim && j < dim {
        let mut e = Mat::zeros(dim, 1);
        e[(j, 0)] = 1.0;
        push(e, &mut basis, false)?;
        j += 1;
    }
    if basis.len() != dim {
        return Err(Error::Inconsistent(
            "schur reorder: completion failed".into(),
        ));
    }
    let mut out = Mat::zeros(dim, dim);
    for (j, b) in basis.iter().enumerate() {
        out.view_mut((0, j), (dim, 1)).copy_from(b);
    }
    Ok(out)
}

/// Swap the adjacent diagonal blocks starting at `r` with sizes `p` then
/// `qs`, keeping the Schur form and accumulating the transformation.
fn swap_adjacent(t: &mut Mat, q: &mut Mat, r: usize, p: usize, qs: usize) -> Result<()> {
    let a11 = t.view((r, r), (p, p)).clone_owned();
    let a12 = t.view((r, r + p), (p, qs)).clone_owned();
    let a22 = t.view((r + p, r + p), (qs, qs)).clone_owned();
    // a11 x - x a22 = -a12  (vec, column-major)
    let lhs = kron(&Mat::identity(qs, qs), &a11) - kron(&a22.transpose(), &Mat::identity(p, p));
    let rhs = Mat::from_column_slice(p * qs, 1, (-&a12).as_slice());
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Inconsistent("schur reorder: coincident block spectra".into()))?;
    let x = Mat::from_column_slice(p, qs, x.as_slice());
    let mut w = Mat::zeros(p + qs, qs);
    w.view_mut((0, 0), (p, qs)).copy_from(&x);
    w.view_mut((p, 0), (qs, qs))
        .copy_from(&Mat::identity(qs, qs));
    let g = orthonormal_completion(&w)?;
    apply_block_transform(t, q, r, &g);
    // the (2,1) block is zero up to roundoff after the swap
    for i in 0..p {
        for j in 0..qs {
            t[(r + qs + i, r + j)] = 0.0;
        }
    }
    Ok(())
}

pub(crate) struct OrderedSchur {
    pub q: Mat,
    #[cfg_attr(not(test), allow(dead_code))]
    pub t: Mat,
    pub stable_dim: usize,
}

/// Real Schur decomposition of `h` with all eigenvalues satisfying
/// `Re < -axis_tol` moved to the leading block. Eigenvalues inside the
/// `|Re| <= axis_tol` band abort the ordering, since no stable/antistable
/// splitting exists there.
pub(crate) fn ordered_schur_stable(h: &Mat, axis_tol: f64) -> Result<OrderedSchur> {
    let (mut q, mut t) = real_schur(h)?;
    let _ = block_partition(&mut t);
    split_real_blocks(&mut t, &mut q);

    // classify blocks once, then bubble the stable ones to the front
    let blocks = block_partition(&mut t);
    let mut sizes: Vec<usize> = blocks.iter().map(|b| b.size).collect();
    let mut stable: Vec<bool> = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let re = block_re(&t, b);
        if re.abs() <= axis_tol {
            return Err(Error::NoStabilizingSolution(format!(
                "eigenvalue with real part {re:e} on the imaginary axis"
            )));
        }
        stable.push(re < 0.0);
    }

    loop {
        let mut swapped = false;
        let mut start = 0;
        for k in 0..sizes.len().saturating_sub(1) {
            if !stable[k] && stable[k + 1] {
                swap_adjacent(&mut t, &mut q, start, sizes[k], sizes[k + 1])?;
                sizes.swap(k, k + 1);
                stable.swap(k, k + 1);
                swapped = true;
            }
            start += sizes[k];
        }
        if !swapped {
            break;
        }
    }

    let stable_dim = sizes
        .iter()
        .zip(stable.iter())
        .filter(|(_, s)| **s)
        .map(|(sz, _)| sz)
        .sum();
    Ok(OrderedSchur { q, t, stable_dim })
}
