//! Dense vectors and matrices, activations, and seeded randomness.
//!
//! Storage is row-major `f64`. Most hot loops in the model modules work on
//! plain slices; [`DenseVector`] derefs to `[f64]` so both styles mix freely.

use std::ops::{Deref, DerefMut};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        DenseVector(vec![0.0; dim])
    }

    pub fn from_vec(entries: Vec<f64>) -> Self {
        DenseVector(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

impl From<&[f64]> for DenseVector {
    fn from(v: &[f64]) -> Self {
        DenseVector(v.to_vec())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure_dim(rows * cols, data.len(), "matrix entries")?;
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            ensure_dim(cols, r.len(), "matrix row length")?;
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`, failing on a length mismatch.
    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector> {
        ensure_dim(self.cols, x.len(), "matvec input")?;
        Ok(DenseVector(self.mul_vec(x)))
    }

    /// Unchecked `self · x`; panics on mismatch. Used internally once shapes are known.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_acc(x, &mut out);
        out
    }

    /// `out += self · x`
    pub fn mul_vec_acc(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matrix-vector shape mismatch");
        assert_eq!(out.len(), self.rows, "matrix-vector output mismatch");
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · x`
    pub fn tmul_vec_acc(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.rows, "transposed product shape mismatch");
        assert_eq!(out.len(), self.cols, "transposed product output mismatch");
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                axpy(xr, self.row(r), out);
            }
        }
    }

    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.tmul_vec_acc(x, &mut out);
        out
    }

    /// `self += scale · a bᵀ`
    pub fn add_outer(&mut self, scale: f64, a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), self.rows);
        assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let s = scale * ar;
            if s != 0.0 {
                axpy(s, b, self.row_mut(r));
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

fn check_finite(z: &[f64], what: &str) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite entry in {what}")))
    }
}

pub fn tanh_act(z: &[f64]) -> Result<DenseVector> {
    check_finite(z, "tanh input")?;
    Ok(DenseVector(z.iter().map(|v| v.tanh()).collect()))
}

/// `1 − tanh(z)²`, elementwise.
pub fn tanh_grad(z: &[f64]) -> Result<DenseVector> {
    check_finite(z, "tanh input")?;
    Ok(DenseVector(
        z.iter()
            .map(|v| {
                let t = v.tanh();
                1.0 - t * t
            })
            .collect(),
    ))
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_act(z: &[f64]) -> Result<DenseVector> {
    check_finite(z, "sigmoid input")?;
    Ok(DenseVector(z.iter().map(|&v| sigmoid(v)).collect()))
}

/// Apply tanh in place.
pub(crate) fn tanh_in_place(z: &mut [f64]) {
    z.iter_mut().for_each(|v| *v = v.tanh());
}

/// Multiply `delta` in place by the tanh derivative expressed through the
/// activation output `a = tanh(z)`.
pub(crate) fn tanh_backward_in_place(a: &[f64], delta: &mut [f64]) {
    for (d, &ai) in delta.iter_mut().zip(a) {
        *d *= 1.0 - ai * ai;
    }
}

/// Seeded random stream. Identical seeds produce identical draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent sub-stream derived from the same master seed, e.g. one per worker.
    pub fn derive(&self, stream: u64) -> RngStream {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        RngStream {
            seed: self.seed,
            inner,
        }
    }

    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// i.i.d. `Normal(mu, sigma2)` entries. Note `sigma2` is the variance.
pub fn gaussian_init(
    rows: usize,
    cols: usize,
    mu: f64,
    sigma2: f64,
    rng: &mut RngStream,
) -> Result<DenseMatrix> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gaussian_init needs finite mu and variance >= 0, got mu={mu} sigma2={sigma2}"
        )));
    }
    let normal = Normal::new(mu, sigma2.sqrt())
        .map_err(|e| Error::InvalidArgument(format!("normal distribution: {e}")))?;
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Ok(DenseMatrix { rows, cols, data })
}

/// Uniform `[-r, r]` entries with `r = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init(rows: usize, cols: usize, rng: &mut RngStream) -> DenseMatrix {
    let r = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| (2.0 * rng.uniform() - 1.0) * r)
        .collect();
    DenseMatrix { rows, cols, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn tanh_examples() {
        assert_eq!(tanh_act(&[0.0, 0.0]).unwrap().as_ref(), &[0.0, 0.0]);
        assert_eq!(tanh_grad(&[0.0]).unwrap().as_ref(), &[1.0]);
        // tanh(1) = 0.76159415595576..., tanh(2) = 0.96402758007581...
        let t = tanh_act(&[1.0, 2.0]).unwrap();
        assert!(close(t[0], 0.761594, 1e-6));
        assert!(close(t[1], 0.964028, 1e-6));
    }

    #[test]
    fn tanh_grad_matches_finite_differences() {
        let h: f64 = 1e-6;
        let mut z: f64 = -5.0;
        while z <= 5.0 {
            let numeric = ((z + h).tanh() - (z - h).tanh()) / (2.0 * h);
            let analytic = tanh_grad(&[z]).unwrap()[0];
            let rel = (analytic - numeric).abs() / analytic.abs().max(1e-300);
            assert!(rel < 1e-6, "z={z} rel={rel}");
            z += 0.25;
        }
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_act(&[0.0]).unwrap()[0], 0.5);
        assert!(close(sigmoid_act(&[50.0]).unwrap()[0], 1.0, 1e-12));
        // 1 / (1 + e) = 0.2689414213699951
        assert!(close(sigmoid_act(&[-1.0]).unwrap()[0], 0.268941, 1e-6));
        assert!(sigmoid_act(&[-800.0]).unwrap()[0].is_finite());
    }

    #[test]
    fn non_finite_inputs_rejected() {
        assert!(matches!(tanh_act(&[f64::NAN]), Err(Error::InvalidInput(_))));
        assert!(matches!(tanh_grad(&[f64::INFINITY]), Err(Error::InvalidInput(_))));
        assert!(matches!(sigmoid_act(&[f64::NAN]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn gaussian_zero_variance_and_determinism() {
        let mut rng = RngStream::new(1);
        let m = gaussian_init(2, 2, 0.0, 0.0, &mut rng).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0));

        let a = gaussian_init(3, 4, 0.0, 0.1, &mut RngStream::new(99)).unwrap();
        let b = gaussian_init(3, 4, 0.0, 0.1, &mut RngStream::new(99)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());

        assert!(matches!(
            gaussian_init(1, 1, 0.0, -1.0, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn gaussian_sample_mean() {
        let m = gaussian_init(1, 100_000, 0.0, 0.1, &mut RngStream::new(7)).unwrap();
        let mean = m.as_slice().iter().sum::<f64>() / m.len() as f64;
        assert!(mean.abs() < 0.005, "mean={mean}");
        let var = m.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m.len() as f64;
        assert!((var - 0.1).abs() < 0.005, "var={var}");
    }

    #[test]
    fn matvec_shapes() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]).unwrap().as_ref(), &[-2.0, -2.0]);
        assert!(matches!(
            m.matvec(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(m.tmul_vec(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        assert_eq!(m.transpose().mul_vec(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn derived_streams_differ_but_reproduce() {
        let master = RngStream::new(5);
        let mut a = master.derive(0);
        let mut b = master.derive(1);
        let mut a2 = master.derive(0);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xa2: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }
}
