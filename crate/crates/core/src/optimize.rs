//! Parameter containers and update rules.
//!
//! Every model keeps its trainable state in a [`ParamVector`]: an ordered
//! set of named matrices that can be viewed as one flat vector θ. The
//! first-order updates work segment-wise; L-BFGS and the gradient checker
//! work on the flat view.

use indexmap::IndexMap;

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{axpy, dot, DenseMatrix};

/// Handle to a segment inside a [`ParamVector`]. Stable for a given layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentId(pub usize);

/// Ordered, uniquely named parameter segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    segments: IndexMap<String, DenseMatrix>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseMatrix) -> Result<SegmentId> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "segment name `{name}` must be non-empty and free of whitespace"
            )));
        }
        if self.segments.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate segment `{name}`")));
        }
        let (idx, _) = self.segments.insert_full(name, value);
        Ok(SegmentId(idx))
    }

    pub fn id(&self, name: &str) -> Option<SegmentId> {
        self.segments.get_index_of(name).map(SegmentId)
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.segments.get(name)
    }

    #[inline]
    pub fn seg(&self, id: SegmentId) -> &DenseMatrix {
        &self.segments[id.0]
    }

    #[inline]
    pub fn seg_mut(&mut self, id: SegmentId) -> &mut DenseMatrix {
        &mut self.segments[id.0]
    }

    pub fn name(&self, id: SegmentId) -> &str {
        self.segments.get_index(id.0).map(|(k, _)| k.as_str()).unwrap_or("")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseMatrix)> {
        self.segments.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut DenseMatrix)> {
        self.segments.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// Total scalar count.
    pub fn flat_len(&self) -> usize {
        self.segments.values().map(DenseMatrix::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for m in self.segments.values() {
            out.extend_from_slice(m.as_slice());
        }
        out
    }

    /// Overwrite all entries from a flat vector laid out as by [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        ensure_dim(self.flat_len(), flat.len(), "flat parameter vector")?;
        let mut off = 0;
        for m in self.segments.values_mut() {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// A copy of this layout filled from `flat`.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParamVector> {
        let mut out = self.clone();
        out.assign_flat(flat)?;
        Ok(out)
    }

    pub fn zeros_like(&self) -> ParamVector {
        ParamVector {
            segments: self
                .segments
                .iter()
                .map(|(k, m)| (k.clone(), DenseMatrix::zeros(m.rows(), m.cols())))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(other.segments.iter())
                .all(|((ka, a), (kb, b))| ka == kb && a.rows() == b.rows() && a.cols() == b.cols())
    }

    fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "parameter vectors have different layouts".into(),
            ))
        }
    }

    /// `self += alpha · other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.segments.values_mut().zip(other.segments.values()) {
            axpy(alpha, b.as_slice(), a.as_mut_slice());
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.segments.values_mut().for_each(|m| m.scale(s));
    }

    pub fn fill(&mut self, v: f64) {
        self.segments.values_mut().for_each(|m| m.fill(v));
    }

    pub fn norm_sq(&self) -> f64 {
        self.segments
            .values()
            .map(|m| dot(m.as_slice(), m.as_slice()))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.segments.values().all(DenseMatrix::is_finite)
    }
}

/// `θ − α∇`
pub fn sgd_step(theta: &ParamVector, grad: &ParamVector, alpha: f64) -> Result<ParamVector> {
    let mut out = theta.clone();
    sgd_step_in_place(&mut out, grad, alpha)?;
    Ok(out)
}

pub fn sgd_step_in_place(theta: &mut ParamVector, grad: &ParamVector, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be > 0, got {alpha}")));
    }
    theta.axpy(-alpha, grad)
}

pub const ADAGRAD_EPS: f64 = 1e-8;

/// Diagonal AdaGrad without projection.
#[derive(Debug, Clone)]
pub struct AdaGradState {
    /// Accumulated squared gradients, one per flat coordinate.
    sum_sq: Vec<f64>,
    eta: f64,
    eps: f64,
}

impl AdaGradState {
    pub fn new(template: &ParamVector, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("AdaGrad step must be > 0, got {eta}")));
        }
        Ok(AdaGradState {
            sum_sq: vec![0.0; template.flat_len()],
            eta,
            eps: ADAGRAD_EPS,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn accumulated(&self) -> &[f64] {
        &self.sum_sq
    }

    /// Accumulate `g²` and subtract `η g / sqrt(G + ε)` from θ.
    pub fn step(&mut self, theta: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        theta.check_layout(grad)?;
        ensure_dim(self.sum_sq.len(), theta.flat_len(), "AdaGrad state")?;
        let mut off = 0;
        for (t, g) in theta.segments.values_mut().zip(grad.segments.values()) {
            let acc = &mut self.sum_sq[off..off + g.len()];
            for ((ti, &gi), ai) in t.as_mut_slice().iter_mut().zip(g.as_slice()).zip(acc) {
                if gi != 0.0 {
                    *ai += gi * gi;
                    *ti -= self.eta * gi / (*ai + self.eps).sqrt();
                }
            }
            off += g.len();
        }
        Ok(())
    }
}

/// Functional form of [`AdaGradState::step`].
pub fn adagrad_step(
    theta: &ParamVector,
    grad: &ParamVector,
    state: &mut AdaGradState,
) -> Result<ParamVector> {
    let mut out = theta.clone();
    state.step(&mut out, grad)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// Backtracking failed to find sufficient decrease; the best point so far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iter: 100,
            tol: 1e-6,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
    /// Objective after each accepted iteration, starting with the initial value.
    pub history: Vec<f64>,
}

/// Curvature-pair memory for the two-loop recursion.
#[derive(Debug, Clone)]
pub struct LbfgsState {
    capacity: usize,
    pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl LbfgsState {
    pub fn new(capacity: usize) -> Self {
        LbfgsState {
            capacity: capacity.max(1),
            pairs: std::collections::VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Store `(s, y)` if `sᵀy > 0`; returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 0.0) || !sy.is_finite() {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// `−H g` by two-loop recursion.
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(a - b, s, &mut q);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Minimise `f` from `theta0`. `f` returns `(value, gradient)`.
pub fn lbfgs_minimize<F>(mut f: F, theta0: &[f64], config: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = theta0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    ensure_dim(x.len(), g.len(), "objective gradient")?;
    if !fx.is_finite() {
        return Err(Error::NonFinite("initial objective".into()));
    }
    let mut memory = LbfgsState::new(config.memory);
    let mut history = vec![fx];
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= config.tol {
            status = LbfgsStatus::Converged;
            break;
        }
        let mut d = memory.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // Not a descent direction; restart from steepest descent.
            memory = LbfgsState::new(config.memory);
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if memory.is_empty() {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial)?;
            if ft.is_finite() && ft <= fx + config.armijo * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            log::warn!("lbfgs line search failed at iteration {iterations}");
            status = LbfgsStatus::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        x = x_new;
        fx = f_new;
        g = g_new;
        iterations += 1;
        history.push(fx);
    }
    let grad_norm = dot(&g, &g).sqrt();
    if status == LbfgsStatus::MaxIterations && grad_norm <= config.tol {
        status = LbfgsStatus::Converged;
    }
    Ok(LbfgsResult {
        theta: x,
        value: fx,
        grad_norm,
        iterations,
        status,
        history,
    })
}

/// Relative error used by [`grad_check`]: `|a − n| / max(1, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1.0)
}

/// Compare the analytic gradient of `f` at `theta` with central differences.
/// Returns the maximum relative error over coordinates.
pub fn grad_check<F>(mut f: F, theta: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1e-2], got {eps}")));
    }
    let (f0, analytic) = f(theta)?;
    ensure_dim(theta.len(), analytic.len(), "gradient length")?;
    if !f0.is_finite() || analytic.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective or gradient at θ".into()));
    }
    let mut x = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let (fp, _) = f(&x)?;
        x[i] = orig - eps;
        let (fm, _) = f(&x)?;
        x[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("objective near coordinate {i}")));
        }
        let numeric = (fp - fm) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}
