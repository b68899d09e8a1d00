//! Raw kernels shared by eager tensor methods and graph ops.

use super::{numel, Float};
use crate::error::{shape_err, Result};

/// `c = a' @ b' + beta * c` where `a'` is `a` ([m,k], or stored [k,m] when
/// `ta`) and `b'` is `b` ([k,n], or stored [n,k] when `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Float>(
    ta: bool,
    tb: bool,
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    beta: T,
) {
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    T::gemm(m, k, n, T::one(), a, rsa, csa, b, rsb, csb, beta, c);
}

pub(crate) struct BmmDims {
    pub batch: Vec<usize>,
    pub nbatch: usize,
    pub a_batched: bool,
    pub b_batched: bool,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

pub(crate) fn bmm_dims(a: &[usize], b: &[usize], trans_b: bool) -> Result<BmmDims> {
    if a.len() < 2 || b.len() < 2 {
        return Err(shape_err!("matmul needs rank >= 2 operands, got {:?} and {:?}", a, b));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (kb, n) = if trans_b {
        (b[b.len() - 1], b[b.len() - 2])
    } else {
        (b[b.len() - 2], b[b.len() - 1])
    };
    if k != kb {
        return Err(shape_err!(
            "matmul inner extents differ: {:?} x {:?}{}",
            a,
            b,
            if trans_b { "^T" } else { "" }
        ));
    }
    let ab = &a[..a.len() - 2];
    let bb = &b[..b.len() - 2];
    let batch = if ab == bb || bb.is_empty() {
        ab.to_vec()
    } else if ab.is_empty() {
        bb.to_vec()
    } else {
        return Err(shape_err!("matmul batch extents not broadcastable: {:?} x {:?}", a, b));
    };
    Ok(BmmDims {
        nbatch: numel(&batch),
        a_batched: !ab.is_empty(),
        b_batched: !bb.is_empty(),
        batch,
        m,
        k,
        n,
    })
}

pub(crate) fn bmm_forward<T: Float>(
    a_shape: &[usize],
    a: &[T],
    b_shape: &[usize],
    b: &[T],
    trans_b: bool,
) -> Result<(Vec<usize>, Vec<T>)> {
    let d = bmm_dims(a_shape, b_shape, trans_b)?;
    let mut shape = d.batch.clone();
    shape.extend([d.m, d.n]);
    let mut out = vec![T::zero(); d.nbatch * d.m * d.n];
    let (sa, sb, sc) = (d.m * d.k, d.k * d.n, d.m * d.n);
    for i in 0..d.nbatch {
        let ao = if d.a_batched { i * sa } else { 0 };
        let bo = if d.b_batched { i * sb } else { 0 };
        gemm(
            false,
            trans_b,
            d.m,
            d.k,
            d.n,
            &a[ao..ao + sa],
            &b[bo..bo + sb],
            &mut out[i * sc..(i + 1) * sc],
            T::zero(),
        );
    }
    Ok((shape, out))
}

/// Accumulates `da += dc @ b'^T` and `db += a^T @ dc` (in b's storage layout).
#[allow(clippy::too_many_arguments)]
pub(crate) fn bmm_backward<T: Float>(
    a_shape: &[usize],
    a: &[T],
    b_shape: &[usize],
    b: &[T],
    trans_b: bool,
    dc: &[T],
    da: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let d = bmm_dims(a_shape, b_shape, trans_b).expect("shapes validated in forward");
    let (m, k, n) = (d.m, d.k, d.n);
    let (sa, sb, sc) = (m * k, k * n, m * n);
    if let Some(da) = da {
        for i in 0..d.nbatch {
            let ao = if d.a_batched { i * sa } else { 0 };
            let bo = if d.b_batched { i * sb } else { 0 };
            // da[m,k] += dc[m,n] @ b'^T[n,k]
            gemm(
                false,
                !trans_b,
                m,
                n,
                k,
                &dc[i * sc..(i + 1) * sc],
                &b[bo..bo + sb],
                &mut da[ao..ao + sa],
                T::one(),
            );
        }
    }
    if let Some(db) = db {
        for i in 0..d.nbatch {
            let ao = if d.a_batched { i * sa } else { 0 };
            let bo = if d.b_batched { i * sb } else { 0 };
            let dci = &dc[i * sc..(i + 1) * sc];
            if trans_b {
                // db[n,k] += dc^T[n,m] @ a[m,k]
                gemm(true, false, n, m, k, dci, &a[ao..ao + sa], &mut db[bo..bo + sb], T::one());
            } else {
                // db[k,n] += a^T[k,m] @ dc[m,n]
                gemm(true, false, k, m, n, &a[ao..ao + sa], dci, &mut db[bo..bo + sb], T::one());
            }
        }
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Reorders axes; `out.shape[i] == shape[perm[i]]`.
pub fn permute_data<T: Copy>(shape: &[usize], data: &[T], perm: &[usize]) -> Result<(Vec<usize>, Vec<T>)> {
    let rank = shape.len();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(shape_err!("invalid permutation {:?} for shape {:?}", perm, shape));
    }
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return Ok((out_shape, out));
    }
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..total {
        out.push(data[offset]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    Ok((out_shape, out))
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Split `shape` around `axis` into (outer, extent, inner) counts.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}
