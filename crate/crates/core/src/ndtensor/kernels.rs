//! Convolution and batch-normalization kernels (forward and backward).

use crate::error::{Error, Result};
use crate::ndtensor::Tensor;
use crate::scalar::Scalar;

/// Stride and zero padding of a 3D convolution, ordered (T, H, W).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeometry {
    pub fn new(stride: [usize; 3], pad: [usize; 3]) -> Self {
        Self { stride, pad }
    }

    /// Unit stride with "same" padding for an odd kernel.
    pub fn same(kernel: [usize; 3]) -> Self {
        Self {
            stride: [1, 1, 1],
            pad: [kernel[0] / 2, kernel[1] / 2, kernel[2] / 2],
        }
    }
}

/// Output extent of one convolved axis (floor semantics).
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

struct Dims {
    n: usize,
    cin: usize,
    cout: usize,
    inp: [usize; 3],
    ker: [usize; 3],
    out: [usize; 3],
}

fn conv_dims<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, geom: &ConvGeometry) -> Result<Dims> {
    if x.rank() != 5 || w.rank() != 5 {
        return Err(Error::ShapeMismatch(format!(
            "conv3d expects rank-5 input and weight, got {:?} and {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let (xs, ws) = (x.shape(), w.shape());
    if xs[1] != ws[1] {
        return Err(Error::ShapeMismatch(format!(
            "conv input channels {} vs weight {:?}",
            xs[1], ws
        )));
    }
    let ker = [ws[2], ws[3], ws[4]];
    if ker.iter().any(|k| k % 2 == 0) {
        return Err(Error::InvalidGeometry(format!("kernel {ker:?} must be odd")));
    }
    let mut out = [0; 3];
    for ax in 0..3 {
        out[ax] = conv_out_len(xs[ax + 2], ker[ax], geom.stride[ax], geom.pad[ax]).ok_or_else(|| {
            Error::InvalidGeometry(format!(
                "input {:?} kernel {ker:?} geometry {geom:?} leaves no output",
                &xs[2..]
            ))
        })?;
    }
    Ok(Dims {
        n: xs[0],
        cin: xs[1],
        cout: ws[0],
        inp: [xs[2], xs[3], xs[4]],
        ker,
        out,
    })
}

/// Output positions `o` in `[lo, hi)` whose input index `o*s + d - p` lies in `[0, len)`.
#[inline]
fn valid_range(out_len: usize, stride: usize, d: usize, pad: usize, len: usize) -> (usize, usize) {
    let lo = if pad > d { (pad - d).div_ceil(stride) } else { 0 };
    // need o*s + d - p <= len - 1
    let hi = if len + pad > d {
        ((len - 1 + pad - d) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Visits every (output row, input row, kernel tap) triple; `f` gets
/// (weight offset, output row offset, input row offset, wo range, wi of wo=lo).
#[inline]
fn for_each_tap(d: &Dims, geom: &ConvGeometry, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
    let [kt, kh, kw] = d.ker;
    let [ti_len, hi_len, wi_len] = d.inp;
    let [to_len, ho_len, wo_len] = d.out;
    let [st, sh, sw] = geom.stride;
    let [pt, ph, pw] = geom.pad;
    for dt in 0..kt {
        let (tlo, thi) = valid_range(to_len, st, dt, pt, ti_len);
        for dh in 0..kh {
            let (hlo, hhi) = valid_range(ho_len, sh, dh, ph, hi_len);
            for dw in 0..kw {
                let (wlo, whi) = valid_range(wo_len, sw, dw, pw, wi_len);
                if wlo >= whi {
                    continue;
                }
                let tap = (dt * kh + dh) * kw + dw;
                let wi0 = wlo * sw + dw - pw;
                for to in tlo..thi {
                    let ti = to * st + dt - pt;
                    for ho in hlo..hhi {
                        let hi = ho * sh + dh - ph;
                        f(
                            tap,
                            (to * ho_len + ho) * wo_len,
                            (ti * hi_len + hi) * wi_len,
                            wlo,
                            whi,
                            wi0,
                        );
                    }
                }
            }
        }
    }
}

/// Cross-correlation `x[N,Cin,T,H,W] * w[Cout,Cin,kt,kh,kw] + b[Cout]` with zero padding.
pub fn conv3d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    geom: &ConvGeometry,
) -> Result<Tensor<T>> {
    let d = conv_dims(x, w, geom)?;
    if let Some(b) = b {
        if b.shape() != [d.cout] {
            return Err(Error::ShapeMismatch(format!(
                "conv bias {:?} for {} output channels",
                b.shape(),
                d.cout
            )));
        }
    }
    let in_vol: usize = d.inp.iter().product();
    let out_vol: usize = d.out.iter().product();
    let taps: usize = d.ker.iter().product();
    let sw = geom.stride[2];
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![T::zero(); d.n * d.cout * out_vol];
    for n in 0..d.n {
        for co in 0..d.cout {
            let plane = &mut out[(n * d.cout + co) * out_vol..(n * d.cout + co + 1) * out_vol];
            if let Some(b) = b {
                plane.fill(b.data()[co]);
            }
            for ci in 0..d.cin {
                let xv = &xd[(n * d.cin + ci) * in_vol..(n * d.cin + ci + 1) * in_vol];
                let wk = &wd[(co * d.cin + ci) * taps..(co * d.cin + ci + 1) * taps];
                for_each_tap(&d, geom, |tap, orow, irow, lo, hi, wi0| {
                    let wv = wk[tap];
                    let o = &mut plane[orow + lo..orow + hi];
                    if sw == 1 {
                        for (ov, &xv) in o.iter_mut().zip(&xv[irow + wi0..]) {
                            *ov += wv * xv;
                        }
                    } else {
                        for (j, ov) in o.iter_mut().enumerate() {
                            *ov += wv * xv[irow + wi0 + j * sw];
                        }
                    }
                });
            }
        }
    }
    Ok(Tensor::from_raw(vec![d.n, d.cout, d.out[0], d.out[1], d.out[2]], out))
}

/// Gradients of [`conv3d_forward`]: (dx if requested, dw, db).
pub fn conv3d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    geom: &ConvGeometry,
    need_dx: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let d = conv_dims(x, w, geom).expect("validated in forward");
    let in_vol: usize = d.inp.iter().product();
    let out_vol: usize = d.out.iter().product();
    let taps: usize = d.ker.iter().product();
    let sw = geom.stride[2];
    let (xd, wd, gd) = (x.data(), w.data(), dy.data());
    let mut dx = if need_dx {
        vec![T::zero(); x.numel()]
    } else {
        Vec::new()
    };
    let mut dw = vec![T::zero(); w.numel()];
    let mut db = vec![T::zero(); d.cout];
    for n in 0..d.n {
        for co in 0..d.cout {
            let g = &gd[(n * d.cout + co) * out_vol..(n * d.cout + co + 1) * out_vol];
            db[co] += g.iter().copied().sum::<T>();
            for ci in 0..d.cin {
                let base = (n * d.cin + ci) * in_vol;
                let xv = &xd[base..base + in_vol];
                let wbase = (co * d.cin + ci) * taps;
                let wk = &wd[wbase..wbase + taps];
                let dwk = &mut dw[wbase..wbase + taps];
                for_each_tap(&d, geom, |tap, orow, irow, lo, hi, wi0| {
                    let go = &g[orow + lo..orow + hi];
                    let mut acc = T::zero();
                    if sw == 1 {
                        for (&gv, &xv) in go.iter().zip(&xv[irow + wi0..]) {
                            acc += gv * xv;
                        }
                    } else {
                        for (j, &gv) in go.iter().enumerate() {
                            acc += gv * xv[irow + wi0 + j * sw];
                        }
                    }
                    dwk[tap] += acc;
                });
                if need_dx {
                    let dxv = &mut dx[base..base + in_vol];
                    for_each_tap(&d, geom, |tap, orow, irow, lo, hi, wi0| {
                        let wv = wk[tap];
                        let go = &g[orow + lo..orow + hi];
                        if sw == 1 {
                            for (dv, &gv) in dxv[irow + wi0..].iter_mut().zip(go) {
                                *dv += wv * gv;
                            }
                        } else {
                            for (j, &gv) in go.iter().enumerate() {
                                dxv[irow + wi0 + j * sw] += wv * gv;
                            }
                        }
                    });
                }
            }
        }
    }
    (
        need_dx.then(|| Tensor::from_raw(x.shape().to_vec(), dx)),
        Tensor::from_raw(w.shape().to_vec(), dw),
        Tensor::from_raw(vec![d.cout], db),
    )
}

/// Saved context of a batch-normalization forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub train: bool,
}

/// Per-channel statistics of a train-mode pass (for running-stat updates).
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance.
    pub var_unbiased: Vec<T>,
}

fn bn_layout<T: Scalar>(x: &Tensor<T>, channels: usize) -> Result<(usize, usize)> {
    if x.rank() < 2 || x.shape()[1] != channels {
        return Err(Error::ShapeMismatch(format!(
            "batchnorm over {channels} channels got input {:?}",
            x.shape()
        )));
    }
    let inner: usize = x.shape()[2..].iter().product();
    Ok((x.shape()[0], inner))
}

/// Normalized output, backward cache and (train mode only) batch statistics.
pub type BatchNormOutput<T> = (Tensor<T>, BatchNormCache<T>, Option<BatchStats<T>>);

/// Normalizes `x[N,C,...]` per channel. In train mode the batch statistics are
/// used (and returned); in eval mode `running` supplies (mean, var).
pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: Option<(&[T], &[T])>,
    eps: T,
) -> Result<BatchNormOutput<T>> {
    let c = gamma.numel();
    if beta.numel() != c {
        return Err(Error::ShapeMismatch("gamma/beta length differ".into()));
    }
    let (n, inner) = bn_layout(x, c)?;
    let count = n * inner;
    let xd = x.data();
    let train = running.is_none();
    if train && count < 2 {
        return Err(Error::DegenerateBatch(count));
    }
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    match running {
        None => {
            let inv_count = T::one() / T::lit(count as f64);
            for ch in 0..c {
                let mut s = T::zero();
                for b in 0..n {
                    s += xd[(b * c + ch) * inner..(b * c + ch + 1) * inner]
                        .iter()
                        .copied()
                        .sum::<T>();
                }
                let m = s * inv_count;
                let mut v = T::zero();
                for b in 0..n {
                    for &xv in &xd[(b * c + ch) * inner..(b * c + ch + 1) * inner] {
                        v += (xv - m) * (xv - m);
                    }
                }
                mean[ch] = m;
                var[ch] = v * inv_count;
            }
        }
        Some((rm, rv)) => {
            mean.copy_from_slice(rm);
            var.copy_from_slice(rv);
        }
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); xd.len()];
    let mut y = vec![T::zero(); xd.len()];
    let (g, bt) = (gamma.data(), beta.data());
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
            for ((h, yv), &xv) in xhat[r.clone()].iter_mut().zip(&mut y[r.clone()]).zip(&xd[r]) {
                *h = (xv - mean[ch]) * inv_std[ch];
                *yv = g[ch] * *h + bt[ch];
            }
        }
    }
    let stats = train.then(|| {
        let corr = T::lit(count as f64 / (count - 1) as f64);
        BatchStats {
            var_unbiased: var.iter().map(|&v| v * corr).collect(),
            mean,
        }
    });
    Ok((
        Tensor::from_raw(x.shape().to_vec(), y),
        BatchNormCache {
            xhat: Tensor::from_raw(x.shape().to_vec(), xhat),
            inv_std,
            train,
        },
        stats,
    ))
}

/// Returns (dx, dgamma, dbeta).
pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = gamma.numel();
    let shape = dy.shape();
    let n = shape[0];
    let inner: usize = shape[2..].iter().product();
    let count = T::lit((n * inner) as f64);
    let (gd, hd, g) = (dy.data(), cache.xhat.data(), gamma.data());
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
            for (&gv, &hv) in gd[r.clone()].iter().zip(&hd[r]) {
                dbeta[ch] += gv;
                dgamma[ch] += gv * hv;
            }
        }
    }
    let mut dx = vec![T::zero(); gd.len()];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
            let scale = g[ch] * cache.inv_std[ch];
            if cache.train {
                // dx = g*inv_std/M * (M*dy - sum(dy) - xhat*sum(dy*xhat))
                let (sd, sdh) = (dbeta[ch], dgamma[ch]);
                for ((dv, &gv), &hv) in dx[r.clone()].iter_mut().zip(&gd[r.clone()]).zip(&hd[r]) {
                    *dv = scale * (gv - (sd + hv * sdh) / count);
                }
            } else {
                for (dv, &gv) in dx[r.clone()].iter_mut().zip(&gd[r]) {
                    *dv = scale * gv;
                }
            }
        }
    }
    (
        Tensor::from_raw(shape.to_vec(), dx),
        Tensor::from_raw(vec![c], dgamma),
        Tensor::from_raw(vec![c], dbeta),
    )
}
