//! Raw numeric kernels over row-major `f64` buffers. No graph bookkeeping here.

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Right-aligned broadcast of two shapes, numpy style.
pub(crate) fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for (i, slot) in out.iter_mut().enumerate() {
        let da = dim_from_right(a, rank, i);
        let db = dim_from_right(b, rank, i);
        *slot = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return None;
        };
    }
    Some(out)
}

fn dim_from_right(shape: &[usize], rank: usize, i: usize) -> usize {
    let offset = rank - shape.len();
    if i < offset {
        1
    } else {
        shape[i - offset]
    }
}

/// Element strides of `shape` viewed inside `target`; broadcast axes get stride 0.
pub(crate) fn broadcast_strides(shape: &[usize], target: &[usize]) -> Vec<usize> {
    let rank = target.len();
    let offset = rank - shape.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + offset] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Walks every row (all axes but the last) of `shape`, handing the callback the
/// running offsets of each strided operand.
fn for_each_row<const N: usize>(
    shape: &[usize],
    strides: [&[usize]; N],
    mut f: impl FnMut([usize; N]),
) {
    let rank = shape.len();
    if rank <= 1 {
        f([0; N]);
        return;
    }
    let outer = numel(&shape[..rank - 1]);
    let mut index = vec![0usize; rank - 1];
    let mut offsets = [0usize; N];
    for _ in 0..outer {
        f(offsets);
        let mut d = rank - 1;
        while d > 0 {
            d -= 1;
            index[d] += 1;
            for (o, s) in offsets.iter_mut().zip(strides.iter()) {
                *o += s[d];
            }
            if index[d] < shape[d] {
                break;
            }
            for (o, s) in offsets.iter_mut().zip(strides.iter()) {
                *o -= s[d] * shape[d];
            }
            index[d] = 0;
        }
    }
}

pub(crate) fn zip_broadcast(
    a: &[f64],
    a_shape: &[usize],
    b: &[f64],
    b_shape: &[usize],
    out_shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let n = numel(out_shape);
    if a.len() == n && b.len() == n {
        return a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    }
    if b.len() == 1 && a.len() == n {
        let y = b[0];
        return a.iter().map(|&x| f(x, y)).collect();
    }
    if a.len() == 1 && b.len() == n {
        let x = a[0];
        return b.iter().map(|&y| f(x, y)).collect();
    }
    let sa = broadcast_strides(a_shape, out_shape);
    let sb = broadcast_strides(b_shape, out_shape);
    let last = out_shape.len().saturating_sub(1);
    let inner = out_shape.last().copied().unwrap_or(1);
    let (ia, ib) = (sa.get(last).copied().unwrap_or(0), sb.get(last).copied().unwrap_or(0));
    let mut out = Vec::with_capacity(n);
    for_each_row(out_shape, [&sa, &sb], |[oa, ob]| {
        for j in 0..inner {
            out.push(f(a[oa + j * ia], b[ob + j * ib]));
        }
    });
    out
}

pub(crate) fn broadcast_to(data: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    let n = numel(to);
    if data.len() == n {
        return data.to_vec();
    }
    if data.len() == 1 {
        return vec![data[0]; n];
    }
    let s = broadcast_strides(from, to);
    let last = to.len() - 1;
    let inner = to[last];
    let step = s[last];
    let mut out = Vec::with_capacity(n);
    for_each_row(to, [&s], |[o]| {
        for j in 0..inner {
            out.push(data[o + j * step]);
        }
    });
    out
}

/// Sums `data` (of shape `from`) down to `to`, where `to` broadcasts to `from`.
pub(crate) fn sum_to(data: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    let n = numel(to);
    if data.len() == n {
        return data.to_vec();
    }
    if n == 1 {
        return vec![data.iter().sum()];
    }
    let s = broadcast_strides(to, from);
    let zero: Vec<usize> = vec![0; from.len()];
    let last = from.len() - 1;
    let inner = from[last];
    let step = s[last];
    let mut out = vec![0.0; n];
    let mut src = 0;
    for_each_row(from, [&s, &zero], |[o, _]| {
        let row = &data[src..src + inner];
        if step == 0 {
            out[o] += row.iter().sum::<f64>();
        } else {
            for (j, &v) in row.iter().enumerate() {
                out[o + j * step] += v;
            }
        }
        src += inner;
    });
    out
}

/// Splits `shape` around `axis` into (outer, axis length, inner) block sizes.
pub(crate) fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

pub(crate) fn narrow(data: &[f64], shape: &[usize], axis: usize, start: usize, len: usize) -> Vec<f64> {
    let (outer, full, inner) = axis_blocks(shape, axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * full + start) * inner;
        out.extend_from_slice(&data[base..base + len * inner]);
    }
    out
}

pub(crate) fn pad(data: &[f64], shape: &[usize], axis: usize, start: usize, full: usize) -> Vec<f64> {
    let (outer, len, inner) = axis_blocks(shape, axis);
    let mut out = vec![0.0; outer * full * inner];
    for o in 0..outer {
        let dst = (o * full + start) * inner;
        out[dst..dst + len * inner].copy_from_slice(&data[o * len * inner..(o + 1) * len * inner]);
    }
    out
}

pub(crate) fn concat(parts: &[(&[f64], &[usize])], axis: usize) -> Vec<f64> {
    let (outer, _, inner) = axis_blocks(parts[0].1, axis);
    let total: usize = parts.iter().map(|(d, _)| d.len()).sum();
    let mut out = Vec::with_capacity(total);
    for o in 0..outer {
        for (data, shape) in parts {
            let chunk = shape[axis] * inner;
            out.extend_from_slice(&data[o * chunk..(o + 1) * chunk]);
        }
    }
    out
}

/// Geometry of one operand of a (possibly transposed) matrix product.
#[derive(Clone, Copy)]
pub(crate) struct MatView {
    pub rows: usize,
    pub cols: usize,
    pub row_stride: isize,
    pub col_stride: isize,
}

impl MatView {
    /// View of a stored `r x c` row-major block, optionally transposed.
    pub fn new(r: usize, c: usize, transposed: bool) -> Self {
        if transposed {
            MatView { rows: c, cols: r, row_stride: 1, col_stride: c as isize }
        } else {
            MatView { rows: r, cols: c, row_stride: c as isize, col_stride: 1 }
        }
    }
}

const SMALL_GEMM: usize = 4096;

/// `out (m x n) = a (m x k) * b (k x n)`, overwriting `out`.
pub(crate) fn gemm(a: &[f64], av: MatView, b: &[f64], bv: MatView, out: &mut [f64]) {
    let (m, k, n) = (av.rows, av.cols, bv.cols);
    debug_assert_eq!(k, bv.rows);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    if m * n * k <= SMALL_GEMM {
        let (ars, acs) = (av.row_stride as usize, av.col_stride as usize);
        let (brs, bcs) = (bv.row_stride as usize, bv.col_stride as usize);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * ars + p * acs] * b[p * brs + j * bcs];
                }
                out[i * n + j] = acc;
            }
        }
        return;
    }
    // SAFETY: the views describe in-bounds strided access into `a` and `b`
    // (checked by the shape logic of the caller), and `out` holds m*n values.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            av.row_stride,
            av.col_stride,
            b.as_ptr(),
            bv.row_stride,
            bv.col_stride,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
