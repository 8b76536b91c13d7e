//! Raw numeric kernels. Shape problems are reported as plain strings; the
//! graph layer attaches the op name and node index.

use crate::real::Real;
use crate::tensor::Tensor;

pub(crate) type KResult<T> = std::result::Result<Tensor<T>, String>;

/// Square-kernel convolution hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Output extent of a convolution along one spatial axis, if valid.
pub fn conv2d_output_size(input: usize, geom: ConvGeometry) -> Option<usize> {
    let padded = input + 2 * geom.pad;
    if geom.stride == 0 || geom.kernel == 0 || padded < geom.kernel {
        return None;
    }
    Some((padded - geom.kernel) / geom.stride + 1)
}

fn dims4(t: &Tensor<impl Real>, what: &str) -> std::result::Result<[usize; 4], String> {
    match t.shape() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        s => Err(format!("{what} must be rank 4 (NCHW), got {s:?}")),
    }
}

fn im2col<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    geom: ConvGeometry,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let k = geom.kernel;
    let plane = ho * wo;
    for ci in 0..c {
        let xc = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oi in 0..ho {
                    let ii = (oi * geom.stride + ki) as isize - geom.pad as isize;
                    let out = &mut dst[oi * wo..(oi + 1) * wo];
                    if ii < 0 || ii >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &xc[ii as usize * w..(ii as usize + 1) * w];
                    for (oj, o) in out.iter_mut().enumerate() {
                        let jj = (oj * geom.stride + kj) as isize - geom.pad as isize;
                        *o = if jj < 0 || jj >= w as isize {
                            T::zero()
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    geom: ConvGeometry,
    ho: usize,
    wo: usize,
    x: &mut [T],
) {
    let k = geom.kernel;
    let plane = ho * wo;
    for ci in 0..c {
        let xc = &mut x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oi in 0..ho {
                    let ii = (oi * geom.stride + ki) as isize - geom.pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let dst = &mut xc[ii as usize * w..(ii as usize + 1) * w];
                    for oj in 0..wo {
                        let jj = (oj * geom.stride + kj) as isize - geom.pad as isize;
                        if jj >= 0 && jj < w as isize {
                            dst[jj as usize] = dst[jj as usize] + src[oi * wo + oj];
                        }
                    }
                }
            }
        }
    }
}

fn is_pointwise(geom: ConvGeometry) -> bool {
    geom.kernel == 1 && geom.stride == 1 && geom.pad == 0
}

pub(crate) fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, geom: ConvGeometry) -> KResult<T> {
    let [n, c, h, wd] = dims4(x, "input")?;
    let [o, wc, kh, kw] = dims4(w, "weight")?;
    if wc != c || kh != geom.kernel || kw != geom.kernel {
        return Err(format!(
            "weight {:?} incompatible with input channels {c} and kernel {}",
            w.shape(),
            geom.kernel
        ));
    }
    let (ho, wo) = match (conv2d_output_size(h, geom), conv2d_output_size(wd, geom)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(format!("input {h}x{wd} too small for {geom:?}")),
    };
    let ckk = c * geom.kernel * geom.kernel;
    let plane = ho * wo;
    let mut out = vec![T::zero(); n * o * plane];
    let mut cols = vec![T::zero(); ckk * plane];
    let xs = x.data();
    for b in 0..n {
        let xb = &xs[b * c * h * wd..(b + 1) * c * h * wd];
        let colref: &[T] = if is_pointwise(geom) {
            xb
        } else {
            im2col(xb, c, h, wd, geom, ho, wo, &mut cols);
            &cols
        };
        T::gemm(
            o,
            ckk,
            plane,
            w.data(),
            ckk as isize,
            1,
            colref,
            plane as isize,
            1,
            &mut out[b * o * plane..(b + 1) * o * plane],
            plane as isize,
            1,
            false,
        );
    }
    Tensor::new(vec![n, o, ho, wo], out).map_err(|e| e.to_string())
}

/// Adjoint of [`conv2d`] with respect to its input.
pub(crate) fn conv2d_input_grad<T: Real>(
    gy: &Tensor<T>,
    w: &Tensor<T>,
    geom: ConvGeometry,
    in_hw: (usize, usize),
) -> KResult<T> {
    let [n, o, ho, wo] = dims4(gy, "output gradient")?;
    let [wo_, c, _, _] = dims4(w, "weight")?;
    let (h, wd) = in_hw;
    if wo_ != o
        || conv2d_output_size(h, geom) != Some(ho)
        || conv2d_output_size(wd, geom) != Some(wo)
    {
        return Err(format!(
            "gradient {:?} incompatible with weight {:?} and input {h}x{wd}",
            gy.shape(),
            w.shape()
        ));
    }
    let ckk = c * geom.kernel * geom.kernel;
    let plane = ho * wo;
    let mut out = vec![T::zero(); n * c * h * wd];
    let mut cols = vec![T::zero(); ckk * plane];
    for b in 0..n {
        let gb = &gy.data()[b * o * plane..(b + 1) * o * plane];
        let xb = &mut out[b * c * h * wd..(b + 1) * c * h * wd];
        if is_pointwise(geom) {
            T::gemm(ckk, o, plane, w.data(), 1, ckk as isize, gb, plane as isize, 1, xb, plane as isize, 1, false);
        } else {
            T::gemm(
                ckk,
                o,
                plane,
                w.data(),
                1,
                ckk as isize,
                gb,
                plane as isize,
                1,
                &mut cols,
                plane as isize,
                1,
                false,
            );
            col2im(&cols, c, h, wd, geom, ho, wo, xb);
        }
    }
    Tensor::new(vec![n, c, h, wd], out).map_err(|e| e.to_string())
}

/// Adjoint of [`conv2d`] with respect to its weight.
pub(crate) fn conv2d_weight_grad<T: Real>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    geom: ConvGeometry,
) -> KResult<T> {
    let [n, c, h, wd] = dims4(x, "input")?;
    let [gn, o, ho, wo] = dims4(gy, "output gradient")?;
    if gn != n || conv2d_output_size(h, geom) != Some(ho) || conv2d_output_size(wd, geom) != Some(wo)
    {
        return Err(format!(
            "input {:?} incompatible with output gradient {:?}",
            x.shape(),
            gy.shape()
        ));
    }
    let ckk = c * geom.kernel * geom.kernel;
    let plane = ho * wo;
    let mut out = vec![T::zero(); o * ckk];
    let mut cols = vec![T::zero(); ckk * plane];
    for b in 0..n {
        let xb = &x.data()[b * c * h * wd..(b + 1) * c * h * wd];
        let gb = &gy.data()[b * o * plane..(b + 1) * o * plane];
        let colref: &[T] = if is_pointwise(geom) {
            xb
        } else {
            im2col(xb, c, h, wd, geom, ho, wo, &mut cols);
            &cols
        };
        // gw[o, ckk] += gy_b[o, plane] · cols[ckk, plane]ᵀ
        T::gemm(o, plane, ckk, gb, plane as isize, 1, colref, 1, plane as isize, &mut out, ckk as isize, 1, true);
    }
    Tensor::new(vec![o, c, geom.kernel, geom.kernel], out).map_err(|e| e.to_string())
}

pub(crate) fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> KResult<T> {
    let (m, k) = match a.shape() {
        &[m, k] => (m, k),
        s => return Err(format!("left operand must be rank 2, got {s:?}")),
    };
    let (k2, n) = match b.shape() {
        &[k2, n] => (k2, n),
        s => return Err(format!("right operand must be rank 2, got {s:?}")),
    };
    if k != k2 {
        return Err(format!("inner dimensions differ: {:?} x {:?}", a.shape(), b.shape()));
    }
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, a.data(), k as isize, 1, b.data(), n as isize, 1, &mut out, n as isize, 1, false);
    Tensor::new(vec![m, n], out).map_err(|e| e.to_string())
}

pub(crate) fn transpose<T: Real>(a: &Tensor<T>) -> KResult<T> {
    let (m, n) = match a.shape() {
        &[m, n] => (m, n),
        s => return Err(format!("transpose needs rank 2, got {s:?}")),
    };
    let d = a.data();
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out).map_err(|e| e.to_string())
}

pub(crate) fn avg_pool2<T: Real>(x: &Tensor<T>) -> KResult<T> {
    let [n, c, h, w] = dims4(x, "input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(format!("2x2 pooling needs even spatial size, got {h}x{w}"));
    }
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let d = x.data();
    let mut out = vec![T::zero(); n * c * ho * wo];
    for p in 0..n * c {
        let src = &d[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            for j in 0..wo {
                let r0 = 2 * i * w + 2 * j;
                let r1 = r0 + w;
                dst[i * wo + j] = (src[r0] + src[r0 + 1] + src[r1] + src[r1 + 1]) * quarter;
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out).map_err(|e| e.to_string())
}

pub(crate) fn upsample2<T: Real>(x: &Tensor<T>) -> KResult<T> {
    let [n, c, h, w] = dims4(x, "input")?;
    let (ho, wo) = (2 * h, 2 * w);
    let d = x.data();
    let mut out = vec![T::zero(); n * c * ho * wo];
    for p in 0..n * c {
        let src = &d[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            for j in 0..wo {
                dst[i * wo + j] = src[(i / 2) * w + j / 2];
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out).map_err(|e| e.to_string())
}

pub(crate) fn bias_add<T: Real>(x: &Tensor<T>, b: &Tensor<T>) -> KResult<T> {
    let s = x.shape();
    if s.len() < 2 || b.shape() != [s[1]] {
        return Err(format!("bias {:?} does not match channels of {:?}", b.shape(), s));
    }
    let c = s[1];
    let inner: usize = s[2..].iter().product();
    let bd = b.data();
    let out = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + bd[(i / inner) % c])
        .collect();
    Tensor::new(s.to_vec(), out).map_err(|e| e.to_string())
}

pub(crate) fn channel_sum<T: Real>(x: &Tensor<T>) -> KResult<T> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(format!("channel sum needs rank >= 2, got {s:?}"));
    }
    let c = s[1];
    let inner: usize = s[2..].iter().product();
    let mut out = vec![T::zero(); c];
    for (i, &v) in x.data().iter().enumerate() {
        let ch = (i / inner) % c;
        out[ch] = out[ch] + v;
    }
    Tensor::new(vec![c], out).map_err(|e| e.to_string())
}

pub(crate) fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> KResult<T> {
    let first = parts.first().ok_or("concat of zero tensors")?.shape();
    if first.len() < 2 {
        return Err(format!("concat needs rank >= 2, got {first:?}"));
    }
    let n = first[0];
    let inner: usize = first[2..].iter().product();
    let mut total_c = 0;
    for p in parts {
        let s = p.shape();
        if s.len() != first.len() || s[0] != n || s[2..] != first[2..] {
            return Err(format!("cannot concat {s:?} with {first:?} along channels"));
        }
        total_c += s[1];
    }
    let mut out = Vec::with_capacity(n * total_c * inner);
    for b in 0..n {
        for p in parts {
            let block = p.shape()[1] * inner;
            out.extend_from_slice(&p.data()[b * block..(b + 1) * block]);
        }
    }
    let mut shape = first.to_vec();
    shape[1] = total_c;
    Tensor::new(shape, out).map_err(|e| e.to_string())
}

pub(crate) fn slice_channels<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> KResult<T> {
    let s = x.shape();
    if s.len() < 2 || start + len > s[1] {
        return Err(format!("channel slice {start}..{} out of range for {s:?}", start + len));
    }
    let inner: usize = s[2..].iter().product();
    let block = s[1] * inner;
    let mut out = Vec::with_capacity(s[0] * len * inner);
    for b in 0..s[0] {
        out.extend_from_slice(&x.data()[b * block + start * inner..b * block + (start + len) * inner]);
    }
    let mut shape = s.to_vec();
    shape[1] = len;
    Tensor::new(shape, out).map_err(|e| e.to_string())
}

pub(crate) fn sum_rows<T: Real>(x: &Tensor<T>) -> KResult<T> {
    let (n, m) = match x.shape() {
        &[n, m] => (n, m),
        s => return Err(format!("row sum needs rank 2, got {s:?}")),
    };
    let out = (0..n)
        .map(|i| x.data()[i * m..(i + 1) * m].iter().copied().sum())
        .collect();
    Tensor::new(vec![n], out).map_err(|e| e.to_string())
}

pub(crate) fn expand_rows<T: Real>(x: &Tensor<T>, m: usize) -> KResult<T> {
    let n = match x.shape() {
        &[n] => n,
        s => return Err(format!("row expansion needs rank 1, got {s:?}")),
    };
    let mut out = Vec::with_capacity(n * m);
    for &v in x.data() {
        out.extend(std::iter::repeat_n(v, m));
    }
    Tensor::new(vec![n, m], out).map_err(|e| e.to_string())
}

pub(crate) fn zip<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> KResult<T> {
    if a.shape() != b.shape() {
        return Err(format!("operands {:?} and {:?} differ", a.shape(), b.shape()));
    }
    let out = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), out).map_err(|e| e.to_string())
}
