//! Dense row-major tensors and the eager kernels behind every graph op.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
            requires_grad: false,
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
            requires_grad: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| T::lit(v)).collect())
    }

    /// Trainable tensor with elements drawn uniformly from `[lo, hi)`.
    pub fn uniform_init(shape: &[usize], lo: f64, hi: f64, rng: &mut RngState) -> Result<Self> {
        check_shape(shape)?;
        if !(lo < hi) {
            return Err(Error::Config(format!("uniform bounds need lo < hi, got [{lo}, {hi})")));
        }
        let n: usize = shape.iter().product();
        let (lo_t, hi_t) = (T::lit(lo), T::lit(hi));
        let data = (0..n)
            .map(|_| {
                let v = T::lit(lo + (hi - lo) * rng.unit());
                // Rounding to a narrower type can land exactly on `hi`.
                if v >= hi_t {
                    lo_t.max(prev_below(hi_t))
                } else {
                    v.max(lo_t)
                }
            })
            .collect();
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: true,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn with_requires_grad(mut self, on: bool) -> Self {
        self.requires_grad = on;
        self
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::shape(op, format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn dims1(&self, op: &'static str) -> Result<usize> {
        match self.shape.as_slice() {
            &[n] => Ok(n),
            s => Err(Error::shape(op, format!("expected a vector, got shape {s:?}"))),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            requires_grad: false,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Config(format!(
            "tensor shape must be a nonempty list of positive sizes, got {shape:?}"
        )));
    }
    Ok(())
}

fn prev_below<T: Real>(x: T) -> T {
    // One ulp toward zero for positive x, away for negative; only used for a
    // value that rounded onto the upper bound.
    let eps = x.abs() * T::epsilon();
    if eps > T::zero() {
        x - eps
    } else {
        x - T::min_positive_value()
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// `[m,k] x [k,n] -> [m,n]`.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::shape("matmul", format!("[{m},{k}] x [{k2},{n}]")));
    }
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

/// `[m,k] x [n,k]^T -> [m,n]`, the usual `X W^T` layer product.
pub fn matmul_nt<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2("matmul_nt")?;
    let (n, k2) = b.dims2("matmul_nt")?;
    if k != k2 {
        return Err(Error::shape("matmul_nt", format!("[{m},{k}] x [{n},{k2}]^T")));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            out.push(dot(arow, &b.data[j * k..(j + 1) * k]));
        }
    }
    Tensor::new(&[m, n], out)
}

/// `[m,k] x [k] -> [m]`.
pub fn matvec<T: Real>(a: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2("matvec")?;
    let k2 = x.dims1("matvec")?;
    if k != k2 {
        return Err(Error::shape("matvec", format!("[{m},{k}] x [{k2}]")));
    }
    let out = (0..m).map(|i| dot(&a.data[i * k..(i + 1) * k], &x.data)).collect();
    Tensor::new(&[m], out)
}

/// `[m] x [m,n] -> [n]`: weighted sum of rows.
pub fn vecmat<T: Real>(x: &Tensor<T>, a: &Tensor<T>) -> Result<Tensor<T>> {
    let m = x.dims1("vecmat")?;
    let (m2, n) = a.dims2("vecmat")?;
    if m != m2 {
        return Err(Error::shape("vecmat", format!("[{m}] x [{m2},{n}]")));
    }
    let mut out = vec![T::zero(); n];
    for (t, &w) in x.data.iter().enumerate() {
        for (o, &h) in out.iter_mut().zip(&a.data[t * n..(t + 1) * n]) {
            *o = *o + w * h;
        }
    }
    Tensor::new(&[n], out)
}

/// Numerically stable softmax of one slice, skipping masked-out entries
/// (`mask[i] == false`), which receive exactly zero.
pub(crate) fn softmax_slice<T: Real>(x: &[T], mask: Option<&[bool]>, out: &mut [T]) -> Result<()> {
    let keep = |i: usize| mask.map_or(true, |m| m[i]);
    let mut max = T::neg_infinity();
    for (i, &v) in x.iter().enumerate() {
        if keep(i) {
            if !v.is_finite() {
                return Err(Error::NonFinite("softmax"));
            }
            max = max.max(v);
        }
    }
    if max == T::neg_infinity() {
        return Err(Error::Contract("softmax over an empty or fully masked slice".into()));
    }
    let mut sum = T::zero();
    for (i, (o, &v)) in out.iter_mut().zip(x).enumerate() {
        *o = if keep(i) { (v - max).exp() } else { T::zero() };
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
    Ok(())
}

/// Softmax along `axis`, computed with max-subtraction.
pub fn softmax<T: Real>(v: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= v.rank() {
        return Err(Error::shape("softmax", format!("axis {axis} for shape {:?}", v.shape)));
    }
    let len = v.shape[axis];
    let inner: usize = v.shape[axis + 1..].iter().product();
    let outer: usize = v.shape[..axis].iter().product();
    let mut out = vec![T::zero(); v.len()];
    let mut buf = vec![T::zero(); len];
    let mut res = vec![T::zero(); len];
    for o in 0..outer {
        for i in 0..inner {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = v.data[(o * len + j) * inner + i];
            }
            softmax_slice(&buf, None, &mut res)?;
            for (j, &r) in res.iter().enumerate() {
                out[(o * len + j) * inner + i] = r;
            }
        }
    }
    Tensor::new(&v.shape, out)
}

/// Softmax of a vector where `mask[t] == false` frames get weight zero.
pub fn masked_softmax<T: Real>(v: &Tensor<T>, mask: Option<&[bool]>) -> Result<Tensor<T>> {
    let n = v.dims1("masked_softmax")?;
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::shape("masked_softmax", format!("mask {} vs {n}", m.len())));
        }
    }
    let mut out = vec![T::zero(); n];
    softmax_slice(&v.data, mask, &mut out)?;
    Tensor::new(&[n], out)
}

pub fn log_softmax<T: Real>(v: &[T]) -> Vec<T> {
    let max = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let lse = v.iter().fold(T::zero(), |s, &x| s + (x - max).exp()).ln() + max;
    v.iter().map(|&x| x - lse).collect()
}

/// Same-length 1-D cross-correlation of `signal` (`[T]`) with each row of
/// `kernels` (`[C, W]`, `W` odd), zero-padded and centred:
/// `out[t, c] = sum_k kernels[c, k] * signal[t + k - W/2]`.
pub fn conv1d<T: Real>(kernels: &Tensor<T>, signal: &Tensor<T>) -> Result<Tensor<T>> {
    let (channels, width) = kernels.dims2("conv1d")?;
    let len = signal.dims1("conv1d")?;
    if width % 2 == 0 {
        return Err(Error::Config(format!("conv1d kernel width must be odd, got {width}")));
    }
    let half = width / 2;
    let mut out = vec![T::zero(); len * channels];
    for t in 0..len {
        for c in 0..channels {
            let krow = &kernels.data[c * width..(c + 1) * width];
            let mut acc = T::zero();
            for (k, &kv) in krow.iter().enumerate() {
                let pos = t + k;
                if pos >= half && pos - half < len {
                    acc = acc + kv * signal.data[pos - half];
                }
            }
            out[t * channels + c] = acc;
        }
    }
    Tensor::new(&[len, channels], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn uniform_init_respects_bounds_and_seed() {
        let mut rng = RngState::new(42);
        let w = Tensor::<f64>::uniform_init(&[320, 320], -0.1, 0.1, &mut rng).unwrap();
        assert!(w.requires_grad());
        assert!(w.data().iter().all(|&x| (-0.1..0.1).contains(&x)));

        let mut rng = RngState::new(3);
        let w = Tensor::<f32>::uniform_init(&[1], 0.0, 5.0, &mut rng).unwrap();
        assert!(w.item() >= 0.0);

        let a = Tensor::<f64>::uniform_init(&[7, 3], -0.1, 0.1, &mut RngState::new(42)).unwrap();
        let b = Tensor::<f64>::uniform_init(&[7, 3], -0.1, 0.1, &mut RngState::new(42)).unwrap();
        let bits = |t: &Tensor<f64>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn uniform_init_rejects_bad_arguments() {
        let mut rng = RngState::new(0);
        assert!(Tensor::<f64>::uniform_init(&[], -0.1, 0.1, &mut rng).is_err());
        assert!(Tensor::<f64>::uniform_init(&[2, 0], -0.1, 0.1, &mut rng).is_err());
        assert!(Tensor::<f64>::uniform_init(&[2], 0.1, 0.1, &mut rng).is_err());
    }

    #[test]
    fn matmul_identity_and_zero() {
        let mut rng = RngState::new(5);
        let a = Tensor::<f64>::uniform_init(&[3, 4], -1.0, 1.0, &mut rng).unwrap();
        let i3 = Tensor::identity(3);
        assert_eq!(matmul(&i3, &a).unwrap().data(), a.data());
        let z = Tensor::zeros(&[2, 3]);
        assert!(matmul(&z, &a).unwrap().data().iter().all(|&x| x == 0.0));
        assert!(matmul(&a, &i3).is_err());
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = RngState::new(11);
        let a = Tensor::<f64>::uniform_init(&[4, 5], -1.0, 1.0, &mut rng).unwrap();
        let b = Tensor::<f64>::uniform_init(&[5, 3], -1.0, 1.0, &mut rng).unwrap();
        let got = matmul(&a, &b).unwrap();
        let want = naive_matmul(a.data(), b.data(), 4, 5, 3);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_variants_agree() {
        let mut rng = RngState::new(12);
        let a = Tensor::<f64>::uniform_init(&[3, 4], -1.0, 1.0, &mut rng).unwrap();
        let b = Tensor::<f64>::uniform_init(&[2, 4], -1.0, 1.0, &mut rng).unwrap();
        let bt = {
            let mut v = vec![0.0; 8];
            for i in 0..2 {
                for j in 0..4 {
                    v[j * 2 + i] = b.data()[i * 4 + j];
                }
            }
            t(&[4, 2], &v)
        };
        let nt = matmul_nt(&a, &b).unwrap();
        let nn = matmul(&a, &bt).unwrap();
        for (x, y) in nt.data().iter().zip(nn.data()) {
            assert!((x - y).abs() < 1e-14);
        }
        let x = t(&[4], &[1.0, -2.0, 0.5, 3.0]);
        let mv = matvec(&a, &x).unwrap();
        let want = naive_matmul(a.data(), x.data(), 3, 4, 1);
        for (g, w) in mv.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
        let w = t(&[3], &[0.2, 0.3, 0.5]);
        let vm = vecmat(&w, &a).unwrap();
        let want = naive_matmul(w.data(), a.data(), 1, 3, 4);
        for (g, w) in vm.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&t(&[3], &[0.0, 0.0, 0.0]), 0).unwrap();
        for &x in s.data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&t(&[2], &[1000.0, 0.0]), 0).unwrap();
        assert!(s.all_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-15);

        // exp-normalize evaluated directly: e^k / (e + e^2 + e^3)
        let e = std::f64::consts::E;
        let z = e + e * e + e * e * e;
        let want = [e / z, e * e / z, e * e * e / z];
        let s = softmax(&t(&[3], &[1.0, 2.0, 3.0]), 0).unwrap();
        for (g, w) in s.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_along_axis() {
        let x = t(&[2, 2], &[0.0, 5.0, 0.0, 5.0]);
        let s0 = softmax(&x, 0).unwrap();
        assert!(s0.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let s1 = softmax(&x, 1).unwrap();
        assert!((s1.data()[0] + s1.data()[1] - 1.0).abs() < 1e-15);
        assert!(softmax(&x, 2).is_err());
        assert!(softmax(&t(&[2], &[f64::NAN, 0.0]), 0).is_err());
    }

    #[test]
    fn masked_softmax_zeroes_masked_frames() {
        let x = t(&[4], &[1.0, 2.0, 50.0, 3.0]);
        let m = [true, true, false, true];
        let s = masked_softmax(&x, Some(&m)).unwrap();
        assert_eq!(s.data()[2], 0.0);
        assert!((s.data().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(masked_softmax(&x, Some(&[false; 4])).is_err());
    }

    #[test]
    fn conv1d_examples() {
        let delta = t(&[1, 3], &[0.0, 1.0, 0.0]);
        let sig = t(&[5], &[0.3, -1.0, 2.0, 0.0, 4.5]);
        assert_eq!(conv1d(&delta, &sig).unwrap().data(), sig.data());

        let ones = t(&[1, 3], &[1.0, 1.0, 1.0]);
        let zero = Tensor::<f64>::zeros(&[6]);
        assert!(conv1d(&ones, &zero).unwrap().data().iter().all(|&x| x == 0.0));

        // Sliding window over zero-padded [0, 1,0,0,0, 0]: [1, 1, 0, 0].
        let got = conv1d(&ones, &t(&[4], &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(got.shape(), &[4, 1]);
        assert_eq!(got.data(), &[1.0, 1.0, 0.0, 0.0]);

        assert!(conv1d(&t(&[1, 2], &[1.0, 1.0]), &sig).is_err());
    }

    #[test]
    fn conv1d_multi_channel_matches_sliding_window() {
        let mut rng = RngState::new(9);
        let k = Tensor::<f64>::uniform_init(&[3, 5], -1.0, 1.0, &mut rng).unwrap();
        let s = Tensor::<f64>::uniform_init(&[7], -1.0, 1.0, &mut rng).unwrap();
        let got = conv1d(&k, &s).unwrap();
        let padded: Vec<f64> = [0.0, 0.0]
            .iter()
            .chain(s.data())
            .chain(&[0.0, 0.0])
            .copied()
            .collect();
        for tpos in 0..7 {
            for c in 0..3 {
                let w: f64 = (0..5).map(|j| k.data()[c * 5 + j] * padded[tpos + j]).sum();
                assert!((got.data()[tpos * 3 + c] - w).abs() < 1e-14);
            }
        }
    }
}
