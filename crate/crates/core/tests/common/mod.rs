//! Independent nested-loop oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabattn::ndtensor::Tensor;
use tabattn::nn::ParamStore;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi)).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn param<'a>(store: &'a ParamStore<f64>, name: &str) -> &'a [f64] {
    let id = store.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    store.value(id).data()
}

/// Overwrites every trainable parameter with uniform noise in `[-a, a]`.
pub fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, a: f64) {
    for id in store.trainable_ids() {
        let shape = store.value(id).shape().to_vec();
        store.set(id, rand_tensor(rng, &shape, -a, a)).unwrap();
    }
}

pub fn set_param(store: &mut ParamStore<f64>, name: &str, value: f64) {
    let id = store.id(name).unwrap();
    let shape = store.value(id).shape().to_vec();
    store.set(id, Tensor::full(&shape, value).unwrap()).unwrap();
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Cross-correlation of `x[N,Ci,T,H,W]` with `w[Co,Ci,kt,kh,kw]`, zero padding.
pub fn conv3d(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&[f64]>, stride: [usize; 3], pad: [usize; 3]) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, ci, t, h, wd) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let (co, kt, kh, kw) = (ws[0], ws[2], ws[3], ws[4]);
    let out = |len: usize, k: usize, s: usize, p: usize| (len + 2 * p - k) / s + 1;
    let (to, ho, wo) = (
        out(t, kt, stride[0], pad[0]),
        out(h, kh, stride[1], pad[1]),
        out(wd, kw, stride[2], pad[2]),
    );
    let xv = |b_: usize, c: usize, z: isize, y: isize, xx: isize| -> f64 {
        if z < 0 || y < 0 || xx < 0 || z >= t as isize || y >= h as isize || xx >= wd as isize {
            0.0
        } else {
            x.at(&[b_, c, z as usize, y as usize, xx as usize])
        }
    };
    let mut data = Vec::with_capacity(n * co * to * ho * wo);
    for b_ in 0..n {
        for o in 0..co {
            for z in 0..to {
                for y in 0..ho {
                    for xx in 0..wo {
                        let mut s = b.map_or(0.0, |b| b[o]);
                        for c in 0..ci {
                            for dz in 0..kt {
                                for dy in 0..kh {
                                    for dx in 0..kw {
                                        let zi = (z * stride[0] + dz) as isize - pad[0] as isize;
                                        let yi = (y * stride[1] + dy) as isize - pad[1] as isize;
                                        let xi = (xx * stride[2] + dx) as isize - pad[2] as isize;
                                        s += w.at(&[o, c, dz, dy, dx]) * xv(b_, c, zi, yi, xi);
                                    }
                                }
                            }
                        }
                        data.push(s);
                    }
                }
            }
        }
    }
    Tensor::new(&[n, co, to, ho, wo], data).unwrap()
}

/// Cross-correlation of `x[N,Ci,H,W]` with `w[Co,Ci,kh,kw]`, zero padding.
pub fn conv2d(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&[f64]>, stride: usize, pad: usize) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, ci, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (co, kh, kw) = (ws[0], ws[2], ws[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut data = Vec::with_capacity(n * co * ho * wo);
    for b_ in 0..n {
        for o in 0..co {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut s = b.map_or(0.0, |b| b[o]);
                    for c in 0..ci {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let yi = (y * stride + dy) as isize - pad as isize;
                                let xi = (xx * stride + dx) as isize - pad as isize;
                                if yi >= 0 && xi >= 0 && (yi as usize) < h && (xi as usize) < wd {
                                    s += w.at(&[o, c, dy, dx]) * x.at(&[b_, c, yi as usize, xi as usize]);
                                }
                            }
                        }
                    }
                    data.push(s);
                }
            }
        }
    }
    Tensor::new(&[n, co, ho, wo], data).unwrap()
}

/// `W x + b` with `W[out,in]` read from `{prefix}.weight` / `{prefix}.bias`.
pub fn linear(store: &ParamStore<f64>, prefix: &str, x: &[f64]) -> Vec<f64> {
    let w = param(store, &format!("{prefix}.weight"));
    let b = param(store, &format!("{prefix}.bias"));
    let inp = x.len();
    (0..b.len())
        .map(|o| b[o] + (0..inp).map(|i| w[o * inp + i] * x[i]).sum::<f64>())
        .collect()
}

pub fn mlp(store: &ParamStore<f64>, prefix: &str, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = linear(store, &format!("{prefix}.fc1"), x)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    linear(store, &format!("{prefix}.fc2"), &h)
}

/// Channel attention of one sample `x[T,C,H,W]` → `[T*C]`.
pub fn cam(store: &ParamStore<f64>, prefix: &str, x: &Tensor<f64>, tab: Option<&[f64]>) -> Vec<f64> {
    let s = x.shape();
    let (t, c, h, w) = (s[0], s[1], s[2], s[3]);
    let shared = format!("{prefix}.mlp");
    let tab_term = tab.map(|tab| mlp(store, &shared, &mlp(store, &format!("{prefix}.tab_emb"), tab)));
    let mut out = Vec::with_capacity(t * c);
    for i in 0..t {
        let mut mx = vec![f64::NEG_INFINITY; c];
        let mut av = vec![0.0; c];
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let v = x.at(&[i, ch, y, xx]);
                    mx[ch] = mx[ch].max(v);
                    av[ch] += v / (h * w) as f64;
                }
            }
        }
        let a = mlp(store, &shared, &mx);
        let b = mlp(store, &shared, &av);
        for ch in 0..c {
            let e = tab_term.as_ref().map_or(0.0, |v| v[ch]);
            out.push(sigmoid(a[ch] + b[ch] + e));
        }
    }
    out
}

/// Spatial attention of one sample `x[T,C,H,W]` → `[T*H*W]`.
pub fn sam(store: &ParamStore<f64>, prefix: &str, x: &Tensor<f64>, tab: Option<&[f64]>, kernel: usize) -> Vec<f64> {
    let s = x.shape();
    let (t, c, h, w) = (s[0], s[1], s[2], s[3]);
    let emb = tab.map(|tab| mlp(store, &format!("{prefix}.tab_emb"), tab));
    let wt = param(store, &format!("{prefix}.conv.weight"));
    let bias = param(store, &format!("{prefix}.conv.bias"))[0];
    let k_in = if emb.is_some() { 3 } else { 2 };
    let pad = (kernel / 2) as isize;
    let mut out = Vec::with_capacity(t * h * w);
    for i in 0..t {
        let mut planes = vec![vec![0.0; h * w]; k_in];
        for p in 0..h * w {
            let (y, xx) = (p / w, p % w);
            let vals: Vec<f64> = (0..c).map(|ch| x.at(&[i, ch, y, xx])).collect();
            planes[0][p] = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            planes[1][p] = vals.iter().sum::<f64>() / c as f64;
            if let Some(e) = &emb {
                planes[2][p] = e[p];
            }
        }
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let mut acc = bias;
                for (ch, plane) in planes.iter().enumerate() {
                    for dy in 0..kernel as isize {
                        for dx in 0..kernel as isize {
                            let (yi, xi) = (y + dy - pad, xx + dx - pad);
                            if yi >= 0 && xi >= 0 && yi < h as isize && xi < w as isize {
                                let widx = (ch * kernel + dy as usize) * kernel + dx as usize;
                                acc += wt[widx] * plane[yi as usize * w + xi as usize];
                            }
                        }
                    }
                }
                out.push(sigmoid(acc));
            }
        }
    }
    out
}

/// Multi-head self-attention over `seq[T][F]` → `[T]` (pre-sigmoid).
pub fn mhsa(store: &ParamStore<f64>, prefix: &str, seq: &[Vec<f64>], heads: usize, d: usize) -> Vec<f64> {
    let t = seq.len();
    let r = param(store, &format!("{prefix}.rel_pos"));
    let mut concat = vec![Vec::with_capacity(heads * d); t];
    for j in 0..heads {
        let q: Vec<Vec<f64>> = seq
            .iter()
            .map(|x| linear(store, &format!("{prefix}.head{j}.q"), x))
            .collect();
        let k: Vec<Vec<f64>> = seq
            .iter()
            .map(|x| linear(store, &format!("{prefix}.head{j}.k"), x))
            .collect();
        let v: Vec<Vec<f64>> = seq
            .iter()
            .map(|x| linear(store, &format!("{prefix}.head{j}.v"), x))
            .collect();
        for a in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|b| (0..d).map(|e| q[a][e] * (k[b][e] + r[b * d + e])).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let wts = softmax(&scores);
            for e in 0..d {
                concat[a].push((0..t).map(|b| wts[b] * v[b][e]).sum());
            }
        }
    }
    concat
        .iter()
        .map(|row| linear(store, &format!("{prefix}.out"), row)[0])
        .collect()
}

/// Temporal attention of one sample `x[T,C,H,W]` → `[T]`.
pub fn tam(
    store: &ParamStore<f64>,
    prefix: &str,
    x: &Tensor<f64>,
    tab: Option<&[f64]>,
    heads: usize,
    d: usize,
) -> Vec<f64> {
    let s = x.shape();
    let (t, per) = (s[0], s[1] * s[2] * s[3]);
    let emb = tab.map(|tab| mlp(store, &format!("{prefix}.tab_emb"), tab));
    let seq: Vec<Vec<f64>> = (0..t)
        .map(|i| {
            let frame = &x.data()[i * per..(i + 1) * per];
            let mut f = vec![
                frame.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                frame.iter().sum::<f64>() / per as f64,
            ];
            if let Some(e) = &emb {
                f.push(e[i]);
            }
            f
        })
        .collect();
    mhsa(store, &format!("{prefix}.mhsa"), &seq, heads, d)
        .into_iter()
        .map(sigmoid)
        .collect()
}

/// Least-squares solution of `A w = y` via Householder QR (A is n×p, full column rank).
pub fn lstsq_qr(a: &[f64], y: &[f64], n: usize, p: usize) -> Vec<f64> {
    let mut r = a.to_vec();
    let mut qty = y.to_vec();
    for j in 0..p {
        let norm = (j..n).map(|i| r[i * p + j].powi(2)).sum::<f64>().sqrt();
        let alpha = if r[j * p + j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (0..n).map(|i| if i < j { 0.0 } else { r[i * p + j] }).collect();
        v[j] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in j..p {
            let dot: f64 = (j..n).map(|i| v[i] * r[i * p + col]).sum();
            for i in j..n {
                r[i * p + col] -= 2.0 * v[i] * dot / vnorm2;
            }
        }
        let dot: f64 = (j..n).map(|i| v[i] * qty[i]).sum();
        for i in j..n {
            qty[i] -= 2.0 * v[i] * dot / vnorm2;
        }
    }
    let mut w = vec![0.0; p];
    for j in (0..p).rev() {
        let s: f64 = (j + 1..p).map(|k| r[j * p + k] * w[k]).sum();
        w[j] = (qty[j] - s) / r[j * p + j];
    }
    w
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}
