use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest supported rank (N, C, T, H, W).
pub const MAX_RANK: usize = 5;

/// Dense row-major tensor.
#[derive(Clone, PartialEq, Debug)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::ShapeMismatch(format!(
            "rank must be in 1..={MAX_RANK}, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!("extents must be positive, got {shape:?}")));
    }
    Ok(())
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Numpy-style broadcast of two shapes (trailing axes aligned).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let ea = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let eb = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (ea, eb) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::ShapeMismatch(format!("cannot broadcast {a:?} with {b:?}"))),
        };
    }
    Ok(out)
}

/// Strides that read a `shape`-tensor as if it had `out_shape` (zero on stretched axes).
pub(crate) fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let off = out_shape.len() - shape.len();
    (0..out_shape.len())
        .map(|i| {
            if i < off || shape[i - off] == 1 {
                0
            } else {
                own[i - off]
            }
        })
        .collect()
}

/// Odometer over a shape, yielding one linear offset per stride set.
pub(crate) struct Odometer<'a> {
    shape: &'a [usize],
    index: Vec<usize>,
}

impl<'a> Odometer<'a> {
    pub(crate) fn new(shape: &'a [usize]) -> Self {
        Self {
            shape,
            index: vec![0; shape.len()],
        }
    }

    /// Advances to the next index, updating each offset in `offsets`
    /// according to its stride set.
    #[inline]
    pub(crate) fn step(&mut self, offsets: &mut [usize], stride_sets: &[&[usize]]) {
        for ax in (0..self.shape.len()).rev() {
            self.index[ax] += 1;
            for (o, s) in offsets.iter_mut().zip(stride_sets) {
                *o += s[ax];
            }
            if self.index[ax] < self.shape[ax] {
                return;
            }
            for (o, s) in offsets.iter_mut().zip(stride_sets) {
                *o -= s[ax] * self.shape[ax];
            }
            self.index[ax] = 0;
        }
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Internal constructor for kernels whose output shape is correct by construction.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert!(check_shape(&shape).is_ok(), "bad shape {shape:?}");
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        check_shape(shape)?;
        Ok(Self::from_raw(shape.to_vec(), vec![value; shape.iter().product()]))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::from_raw(vec![1], vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        check_shape(shape)?;
        let n = shape.iter().product();
        Ok(Self::from_raw(shape.to_vec(), (0..n).map(&mut f).collect()))
    }

    pub fn zeros_like(&self) -> Self {
        Self::from_raw(self.shape.clone(), vec![T::zero(); self.data.len()])
    }

    pub fn ones_like(&self) -> Self {
        Self::from_raw(self.shape.clone(), vec![T::one(); self.data.len()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.rank(), "index rank mismatch");
        let off = index
            .iter()
            .zip(strides(&self.shape))
            .zip(&self.shape)
            .map(|((&i, s), &e)| {
                assert!(i < e, "index {index:?} out of bounds for {:?}", self.shape);
                i * s
            })
            .sum::<usize>();
        self.data[off]
    }

    /// Returns the single element of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Converts every element to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_raw(
            self.shape.clone(),
            self.data.iter().map(|v| U::lit(v.to_f64_lossless())).collect(),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self::from_raw(shape.to_vec(), self.data.clone()))
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Elementwise binary operator kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

impl BinaryOp {
    #[inline]
    fn apply<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
        }
    }
}

/// Reduction kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

pub(crate) fn elementwise<T: Scalar>(op: BinaryOp, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| op.apply(x, y)).collect();
        return Ok(Tensor::from_raw(a.shape.clone(), data));
    }
    let out_shape = broadcast_shape(&a.shape, &b.shape)?;
    if out_shape.len() > MAX_RANK {
        return Err(Error::ShapeMismatch(format!("broadcast rank exceeds {MAX_RANK}")));
    }
    let sa = broadcast_strides(&a.shape, &out_shape);
    let sb = broadcast_strides(&b.shape, &out_shape);
    let n: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut odo = Odometer::new(&out_shape);
    let mut offs = [0usize, 0usize];
    for _ in 0..n {
        data.push(op.apply(a.data[offs[0]], b.data[offs[1]]));
        odo.step(&mut offs, &[&sa, &sb]);
    }
    Ok(Tensor::from_raw(out_shape, data))
}

/// Sums `grad` (shaped like a broadcast result) back down to `shape`.
pub(crate) fn unbroadcast<T: Scalar>(grad: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if grad.shape == shape {
        return grad.clone();
    }
    let st = broadcast_strides(shape, &grad.shape);
    let mut out = vec![T::zero(); shape.iter().product()];
    let mut odo = Odometer::new(&grad.shape);
    let mut offs = [0usize];
    for &g in &grad.data {
        out[offs[0]] += g;
        odo.step(&mut offs, &[&st]);
    }
    Tensor::from_raw(shape.to_vec(), out)
}

/// Materializes `x` at a broadcast-compatible larger shape.
pub(crate) fn broadcast_to<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    let out = broadcast_shape(&x.shape, shape)?;
    if out != shape {
        return Err(Error::ShapeMismatch(format!(
            "cannot broadcast {:?} to {shape:?}",
            x.shape
        )));
    }
    let sx = broadcast_strides(&x.shape, shape);
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut odo = Odometer::new(shape);
    let mut offs = [0usize];
    for _ in 0..n {
        data.push(x.data[offs[0]]);
        odo.step(&mut offs, &[&sx]);
    }
    Ok(Tensor::from_raw(shape.to_vec(), data))
}

pub(crate) fn normalize_axes(rank: usize, axes: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; rank];
    for &a in axes {
        if a >= rank {
            return Err(Error::InvalidAxis(format!("axis {a} for rank {rank}")));
        }
        if mask[a] {
            return Err(Error::InvalidAxis(format!("axis {a} repeated")));
        }
        mask[a] = true;
    }
    Ok(mask)
}

pub(crate) fn reduced_shape(shape: &[usize], mask: &[bool], keepdims: bool) -> Vec<usize> {
    let kept: Vec<usize> = shape
        .iter()
        .zip(mask)
        .filter_map(|(&e, &m)| match (m, keepdims) {
            (true, true) => Some(1),
            (true, false) => None,
            (false, _) => Some(e),
        })
        .collect();
    if kept.is_empty() {
        vec![1]
    } else {
        kept
    }
}

/// Reduction result; `argmax` holds, for `Max`, the input offset chosen per output slot.
pub(crate) struct Reduced<T> {
    pub value: Tensor<T>,
    pub argmax: Option<Vec<usize>>,
}

pub(crate) fn reduce<T: Scalar>(op: ReduceOp, x: &Tensor<T>, axes: &[usize], keepdims: bool) -> Result<Reduced<T>> {
    let mask = normalize_axes(x.rank(), axes)?;
    let kept_shape: Vec<usize> = x
        .shape
        .iter()
        .zip(&mask)
        .map(|(&e, &m)| if m { 1 } else { e })
        .collect();
    let out_n: usize = kept_shape.iter().product();
    let so = broadcast_strides(&kept_shape, &x.shape);
    let count = x.numel() / out_n;
    let mut odo = Odometer::new(&x.shape);
    let mut offs = [0usize];
    let value_shape = reduced_shape(&x.shape, &mask, keepdims);
    match op {
        ReduceOp::Sum | ReduceOp::Mean => {
            let mut acc = vec![T::zero(); out_n];
            for &v in &x.data {
                acc[offs[0]] += v;
                odo.step(&mut offs, &[&so]);
            }
            if op == ReduceOp::Mean {
                let inv = T::one() / T::lit(count as f64);
                for a in &mut acc {
                    *a *= inv;
                }
            }
            Ok(Reduced {
                value: Tensor::from_raw(value_shape, acc),
                argmax: None,
            })
        }
        ReduceOp::Max => {
            let mut best = vec![T::neg_infinity(); out_n];
            let mut arg = vec![usize::MAX; out_n];
            for (i, &v) in x.data.iter().enumerate() {
                let o = offs[0];
                // strict comparison keeps the lowest linear index on ties
                if arg[o] == usize::MAX || v > best[o] {
                    best[o] = v;
                    arg[o] = i;
                }
                odo.step(&mut offs, &[&so]);
            }
            Ok(Reduced {
                value: Tensor::from_raw(value_shape, best),
                argmax: Some(arg),
            })
        }
    }
}

pub(crate) fn permute<T: Scalar>(x: &Tensor<T>, order: &[usize]) -> Result<Tensor<T>> {
    let rank = x.rank();
    let mut seen = vec![false; rank];
    if order.len() != rank {
        return Err(Error::InvalidAxis(format!("permutation {order:?} for rank {rank}")));
    }
    for &o in order {
        if o >= rank || seen[o] {
            return Err(Error::InvalidAxis(format!("{order:?} is not a permutation")));
        }
        seen[o] = true;
    }
    let xs = strides(&x.shape);
    let out_shape: Vec<usize> = order.iter().map(|&o| x.shape[o]).collect();
    let in_strides: Vec<usize> = order.iter().map(|&o| xs[o]).collect();
    let mut data = Vec::with_capacity(x.numel());
    let mut odo = Odometer::new(&out_shape);
    let mut offs = [0usize];
    for _ in 0..x.numel() {
        data.push(x.data[offs[0]]);
        odo.step(&mut offs, &[&in_strides]);
    }
    Ok(Tensor::from_raw(out_shape, data))
}

pub(crate) fn inverse_permutation(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (i, &o) in order.iter().enumerate() {
        inv[o] = i;
    }
    inv
}

pub(crate) fn concat<T: Scalar>(xs: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::ShapeMismatch("concat of zero tensors".into()))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::InvalidAxis(format!("axis {axis} for rank {rank}")));
    }
    for x in xs {
        let ok = x.rank() == rank
            && x.shape
                .iter()
                .zip(&first.shape)
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "concat along {axis}: {:?} vs {:?}",
                x.shape, first.shape
            )));
        }
    }
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis + 1..].iter().product();
    let mut out_shape = first.shape.clone();
    out_shape[axis] = xs.iter().map(|x| x.shape[axis]).sum();
    let mut data = Vec::with_capacity(out_shape.iter().product());
    for o in 0..outer {
        for x in xs {
            let chunk = x.shape[axis] * inner;
            data.extend_from_slice(&x.data[o * chunk..(o + 1) * chunk]);
        }
    }
    Ok(Tensor::from_raw(out_shape, data))
}

/// Splits `grad` of a concat back into pieces with the given extents along `axis`.
pub(crate) fn split<T: Scalar>(grad: &Tensor<T>, axis: usize, extents: &[usize]) -> Vec<Tensor<T>> {
    let outer: usize = grad.shape[..axis].iter().product();
    let inner: usize = grad.shape[axis + 1..].iter().product();
    let total = grad.shape[axis];
    let mut pieces: Vec<Vec<T>> = extents.iter().map(|e| Vec::with_capacity(outer * e * inner)).collect();
    for o in 0..outer {
        let mut start = o * total * inner;
        for (p, &e) in pieces.iter_mut().zip(extents) {
            p.extend_from_slice(&grad.data[start..start + e * inner]);
            start += e * inner;
        }
    }
    pieces
        .into_iter()
        .zip(extents)
        .map(|(d, &e)| {
            let mut s = grad.shape.clone();
            s[axis] = e;
            Tensor::from_raw(s, d)
        })
        .collect()
}

pub(crate) fn check_ranges(shape: &[usize], ranges: &[(usize, usize)]) -> Result<()> {
    if ranges.len() != shape.len() {
        return Err(Error::InvalidAxis(format!(
            "slice needs {} ranges, got {}",
            shape.len(),
            ranges.len()
        )));
    }
    for (ax, (&(s, e), &ext)) in ranges.iter().zip(shape).enumerate() {
        if s >= e || e > ext {
            return Err(Error::ShapeMismatch(format!(
                "slice {s}..{e} invalid on axis {ax} of extent {ext}"
            )));
        }
    }
    Ok(())
}

/// Copies the box `ranges` out of `x`; `scatter` does the reverse into a zero tensor.
pub(crate) fn slice<T: Scalar>(x: &Tensor<T>, ranges: &[(usize, usize)]) -> Result<Tensor<T>> {
    check_ranges(&x.shape, ranges)?;
    let out_shape: Vec<usize> = ranges.iter().map(|(s, e)| e - s).collect();
    let xs = strides(&x.shape);
    let base: usize = ranges.iter().zip(&xs).map(|((s, _), st)| s * st).sum();
    let n: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut odo = Odometer::new(&out_shape);
    let mut offs = [base];
    for _ in 0..n {
        data.push(x.data[offs[0]]);
        odo.step(&mut offs, &[&xs]);
    }
    Ok(Tensor::from_raw(out_shape, data))
}

pub(crate) fn scatter_slice<T: Scalar>(grad: &Tensor<T>, full_shape: &[usize], ranges: &[(usize, usize)]) -> Tensor<T> {
    let xs = strides(full_shape);
    let base: usize = ranges.iter().zip(&xs).map(|((s, _), st)| s * st).sum();
    let mut out = vec![T::zero(); full_shape.iter().product()];
    let mut odo = Odometer::new(&grad.shape);
    let mut offs = [base];
    for &g in &grad.data {
        out[offs[0]] += g;
        odo.step(&mut offs, &[&xs]);
    }
    Tensor::from_raw(full_shape.to_vec(), out)
}

/// Batched matrix product over the last two axes with broadcast batch axes.
pub(crate) fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "matmul needs rank >= 2, got {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k) = (a.shape[a.rank() - 2], a.shape[a.rank() - 1]);
    let (k2, n) = (b.shape[b.rank() - 2], b.shape[b.rank() - 1]);
    if k != k2 {
        return Err(Error::ShapeMismatch(format!(
            "matmul inner extents differ: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let ba = &a.shape[..a.rank() - 2];
    let bb = &b.shape[..b.rank() - 2];
    let batch = if ba.is_empty() && bb.is_empty() {
        Vec::new()
    } else {
        broadcast_shape(
            if ba.is_empty() { &[1] } else { ba },
            if bb.is_empty() { &[1] } else { bb },
        )?
    };
    let nb: usize = batch.iter().product();
    let (sa, sb) = if batch.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (
            broadcast_strides(if ba.is_empty() { &[1] } else { ba }, &batch),
            broadcast_strides(if bb.is_empty() { &[1] } else { bb }, &batch),
        )
    };
    let mut out = vec![T::zero(); nb * m * n];
    let mut odo = Odometer::new(&batch);
    let mut offs = [0usize, 0usize];
    for bi in 0..nb {
        let ao = offs[0] * m * k;
        let bo = offs[1] * k * n;
        let oo = bi * m * n;
        for i in 0..m {
            let row = &mut out[oo + i * n..oo + (i + 1) * n];
            for p in 0..k {
                let av = a.data[ao + i * k + p];
                let brow = &b.data[bo + p * n..bo + (p + 1) * n];
                for (r, &bv) in row.iter_mut().zip(brow) {
                    *r += av * bv;
                }
            }
        }
        if !batch.is_empty() {
            odo.step(&mut offs, &[&sa, &sb]);
        }
    }
    let mut shape = batch;
    shape.push(m);
    shape.push(n);
    if shape.len() > MAX_RANK {
        return Err(Error::ShapeMismatch(format!("matmul result rank exceeds {MAX_RANK}")));
    }
    Ok(Tensor::from_raw(shape, out))
}

/// Swaps the last two axes.
pub(crate) fn transpose_last<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let r = x.rank();
    let mut order: Vec<usize> = (0..r).collect();
    order.swap(r - 2, r - 1);
    permute(x, &order).expect("valid permutation")
}

pub(crate) fn softmax_lastaxis<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = *x.shape.last().expect("rank >= 1");
    let mut data = x.data.clone();
    for row in data.chunks_mut(n) {
        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s += *v;
        }
        let inv = T::one() / s;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    Tensor::from_raw(x.shape.clone(), data)
}
