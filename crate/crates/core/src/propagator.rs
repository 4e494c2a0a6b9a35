//! Time evolution: the closed-form factorized propagator of the effective
//! Hamiltonian, and numerical time-ordered integration (Schrödinger and
//! cavity-damped Lindblad) of any [`TimeDependentHamiltonian`].

use ndarray::{Array1, Array2, Axis};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::TimeDependentHamiltonian;
use crate::linalg;
use crate::operators::{self, HilbertSpec, LinearOperator, QuantumState};
use crate::scalar::{cis, re, Real, C};

/// Coefficients of the factorized effective propagator
/// `U'(t) = e^{−iA S_x²} e^{−iB S_x a} e^{−iC S_x a†}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorCoefficients<T> {
    pub a: C<T>,
    pub b: C<T>,
    pub c: C<T>,
    /// `g²/(4δ)`.
    pub lambda: T,
}

/// Closed forms
/// `B = (g/2iδ)(e^{iδt} − 1)`, `C = −(g/2iδ)(e^{−iδt} − 1)` and
/// `A = (g²/4δ)[t + (e^{−iδt} − 1)/(iδ)]`.
pub fn coefficients<T: Real>(spec: &HilbertSpec<T>, t: T) -> Result<PropagatorCoefficients<T>> {
    let (g, delta) = (spec.g, spec.delta);
    if delta == T::zero() {
        return Err(Error::ZeroDetuning);
    }
    let two_i_delta = C::new(T::zero(), T::of(2.0) * delta);
    let i_delta = C::new(T::zero(), delta);
    let b = (cis(delta * t) - C::one()) * re(g) / two_i_delta;
    let c = -(cis(-delta * t) - C::one()) * re(g) / two_i_delta;
    let lambda = g * g / (T::of(4.0) * delta);
    let a = (re(t) + (cis(-delta * t) - C::one()) / i_delta) * re(lambda);
    Ok(PropagatorCoefficients { a, b, c, lambda })
}

/// Distinct eigenvalues of the register `S_x` with their spectral projectors.
///
/// The eigenvalues are snapped to the exact half-integers.
pub(crate) fn sx_spectrum<T: Real>(n_atoms: usize) -> Vec<(T, Array2<C<T>>)> {
    let eig = linalg::hermitian_eigen(&operators::register_sx::<T>(n_atoms));
    let dim = eig.values.len();
    let mut groups: Vec<(i64, Array2<C<T>>)> = Vec::new();
    for (k, &val) in eig.values.iter().enumerate() {
        let twice = (val * T::of(2.0)).round();
        debug_assert!((val * T::of(2.0) - twice).abs() < T::of(1e-4));
        let key = twice.to_i64().expect("small half-integer");
        let v = eig.vectors.column(k).to_owned();
        let proj = linalg::outer(&v, &v);
        match groups.iter_mut().find(|(kk, _)| *kk == key) {
            Some((_, p)) => *p = &*p + &proj,
            None => groups.push((key, proj)),
        }
    }
    debug_assert_eq!(groups.iter().map(|(_, p)| linalg::trace(p).re).fold(T::zero(), |s, x| s + x).round(), T::of_usize(dim));
    groups
        .into_iter()
        .map(|(key, p)| (T::of(key as f64) * T::of(0.5), p))
        .collect()
}

/// Block `⟨m| e^{βa} e^{γa†} |n⟩` for `m, n < cutoff`, evaluated on the
/// untruncated ladder.
///
/// Both factors are exact terminating series on any finite ladder, so the
/// product only needs the intermediate levels `k ≥ max(m, n)`; the sum over
/// `k` runs past the cutoff until the terms are negligible.
pub fn ladder_product_block<T: Real>(beta: C<T>, gamma: C<T>, cutoff: usize) -> Array2<C<T>> {
    let ln_b = if beta.is_zero() { None } else { Some((beta.norm().ln(), beta.arg())) };
    let ln_g = if gamma.is_zero() { None } else { Some((gamma.norm().ln(), gamma.arg())) };
    let coupling = beta.norm() * gamma.norm();
    let tail = (coupling * T::of(4.0)).ceil().to_usize().unwrap_or(usize::MAX / 4) + 12;
    let k_cap = cutoff + tail + 4096;
    let mut ln_fact = vec![T::zero()];
    let mut ln_factorial = |n: usize| -> T {
        while ln_fact.len() <= n {
            let k = ln_fact.len();
            let prev = ln_fact[k - 1];
            ln_fact.push(prev + T::of_usize(k).ln());
        }
        ln_fact[n]
    };
    let rel = T::epsilon() * T::of(1e-3);

    let mut out = Array2::zeros((cutoff, cutoff));
    for m in 0..cutoff {
        for n in 0..cutoff {
            let start = m.max(n);
            let base = -(ln_factorial(m) + ln_factorial(n)) * T::of(0.5);
            let mut acc = C::<T>::zero();
            let mut largest = T::zero();
            for k in start..k_cap {
                let (dm, dn) = (k - m, k - n);
                let (lb, pb) = match (dm, ln_b) {
                    (0, _) => (T::zero(), T::zero()),
                    (_, Some((l, p))) => (l * T::of_usize(dm), p * T::of_usize(dm)),
                    (_, None) => break,
                };
                let (lg, pg) = match (dn, ln_g) {
                    (0, _) => (T::zero(), T::zero()),
                    (_, Some((l, p))) => (l * T::of_usize(dn), p * T::of_usize(dn)),
                    (_, None) => break,
                };
                let ln_mag = lb + lg + ln_factorial(k) + base - ln_factorial(dm) - ln_factorial(dn);
                let mag = ln_mag.exp();
                acc = acc + cis(pb + pg) * mag;
                largest = largest.max(mag);
                if k >= start + tail && mag <= rel * largest {
                    break;
                }
            }
            out[[m, n]] = acc;
        }
    }
    out
}

/// `Σ_s f(s) P_s ⊗ F(s)` over the `S_x` spectrum.
fn sx_block_sum<T: Real>(
    spec: &HilbertSpec<T>,
    mut field: impl FnMut(T) -> Array2<C<T>>,
) -> LinearOperator<T> {
    let mut acc = Array2::<C<T>>::zeros((spec.dim(), spec.dim()));
    for (s, proj) in sx_spectrum::<T>(spec.n_atoms) {
        acc = acc + linalg::kron(&proj, &field(s));
    }
    LinearOperator::new_unchecked(acc)
}

/// Effective-frame propagator `U'(t) = e^{−iA S_x²} e^{−iB S_x a} e^{−iC S_x a†}`,
/// restricted to the truncated Fock space of `spec`.
///
/// `S_x` commutes with every factor, so the operator is assembled sector by
/// sector of the `S_x` spectrum: the field factor for eigenvalue `s` is
/// `e^{−iAs²} e^{−iBs a} e^{−iCs a†}`, evaluated exactly by
/// [`ladder_product_block`].
pub fn effective_propagator<T: Real>(spec: &HilbertSpec<T>, t: T) -> Result<LinearOperator<T>> {
    let coeff = coefficients(spec, t)?;
    let minus_i = C::new(T::zero(), -T::one());
    Ok(sx_block_sum(spec, |s| {
        let phase = (minus_i * coeff.a * re(s * s)).exp();
        ladder_product_block(minus_i * coeff.b * re(s), minus_i * coeff.c * re(s), spec.fock_cutoff)
            .mapv(|z| z * phase)
    }))
}

/// `exp(−i(θ₁ S_x + θ₂ S_x²)) ⊗ I_field`.
pub fn one_axis_twist<T: Real>(spec: &HilbertSpec<T>, linear: T, quadratic: T) -> LinearOperator<T> {
    let id = linalg::identity::<T>(spec.fock_cutoff);
    sx_block_sum(spec, |s| id.mapv(|z| z * cis(-(linear * s + quadratic * s * s))))
}

/// Whether `δt` is an integer multiple of 2π within `1e-9` relative.
pub fn at_closure<T: Real>(spec: &HilbertSpec<T>, t: T) -> bool {
    let turns = spec.delta * t / T::TAU();
    (turns - turns.round()).abs() <= T::of(1e-9) * turns.abs().max(T::one())
}

/// Interaction-picture propagator built from the effective description.
#[derive(Debug, Clone)]
pub struct FullFramePropagator<T: Real> {
    /// `e^{−iH0t} U'(t)`.
    pub operator: LinearOperator<T>,
    /// True when `δt = 2kπ`, i.e. the field factor is the identity and the
    /// operator reduces to `exp(−i(Ωt S_x + λt S_x²)) ⊗ I`.
    pub closed_form: bool,
    /// Max-entry distance to the closed form (present only at closure).
    pub closed_form_deviation: Option<T>,
}

/// `U(t) = e^{−iH0t} U'(t)`; at closure also checks it against
/// `exp(−i(Ωt S_x + λt S_x²)) ⊗ I`. Away from closure the product form is
/// returned with `closed_form = false`.
pub fn full_frame_propagator<T: Real>(spec: &HilbertSpec<T>, t: T) -> Result<FullFramePropagator<T>> {
    let coeff = coefficients(spec, t)?;
    let minus_i = C::new(T::zero(), -T::one());
    let omega_t = spec.omega_rabi * t;
    let operator = sx_block_sum(spec, |s| {
        let phase = (minus_i * (coeff.a * re(s * s) + re(omega_t * s))).exp();
        ladder_product_block(minus_i * coeff.b * re(s), minus_i * coeff.c * re(s), spec.fock_cutoff)
            .mapv(|z| z * phase)
    });
    if at_closure(spec, t) {
        let closed = one_axis_twist(spec, omega_t, coeff.lambda * t);
        let dev = operator.max_abs_diff(&closed);
        Ok(FullFramePropagator { operator, closed_form: true, closed_form_deviation: Some(dev) })
    } else {
        Ok(FullFramePropagator { operator, closed_form: false, closed_form_deviation: None })
    }
}

/// Step control for the time-ordered integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method<T> {
    /// Classical fourth-order Runge–Kutta with a fixed step.
    FixedStep { dt: T },
    /// Fourth-order Runge–Kutta, doubling the step count until two
    /// successive results differ by less than `tolerance` (max entry).
    Adaptive { tolerance: T, initial_dt: Option<T>, max_doublings: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig<T> {
    pub method: Method<T>,
    /// Largest dimension for which a full propagator matrix is materialized.
    pub max_dim: usize,
}

pub const DEFAULT_MAX_DIM: usize = 4096;

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self::adaptive(T::of(1e-9))
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn adaptive(tolerance: T) -> Self {
        Self {
            method: Method::Adaptive { tolerance, initial_dt: None, max_doublings: 12 },
            max_dim: DEFAULT_MAX_DIM,
        }
    }

    pub fn fixed(dt: T) -> Self {
        Self { method: Method::FixedStep { dt }, max_dim: DEFAULT_MAX_DIM }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::FixedStep { dt } if !(dt > T::zero() && dt.is_finite()) => {
                Err(Error::InvalidArgument(format!("step must be positive, got {dt}")))
            }
            Method::Adaptive { tolerance, .. } if !(tolerance > T::zero() && tolerance <= T::of(1e-4)) => {
                Err(Error::InvalidArgument(format!("tolerance must lie in (0, 1e-4], got {tolerance}")))
            }
            Method::Adaptive { initial_dt: Some(dt), .. } if !(dt > T::zero()) => {
                Err(Error::InvalidArgument(format!("initial step must be positive, got {dt}")))
            }
            _ => Ok(()),
        }
    }

    /// Bound on the error of an integration with this configuration.
    pub fn tolerance(&self) -> Option<T> {
        match self.method {
            Method::FixedStep { .. } => None,
            Method::Adaptive { tolerance, .. } => Some(tolerance),
        }
    }
}

/// Default step: 40 samples per drive period, else 200 per detuning
/// period; never larger than the inverse of a bound on `‖H‖`.
pub fn default_step<T: Real>(h: &TimeDependentHamiltonian<T>) -> T {
    let spec = h.spec();
    let by_frequency = if spec.omega_rabi.abs() > T::zero() {
        T::TAU() / spec.omega_rabi.abs() / T::of(40.0)
    } else if spec.delta.abs() > T::zero() {
        T::TAU() / spec.delta.abs() / T::of(200.0)
    } else {
        T::of(0.05) / spec.g
    };
    let bound = h.terms().iter().fold(T::zero(), |acc, term| {
        let amp = match term.coefficient {
            crate::hamiltonian::Coefficient::Constant(c) => c.norm(),
            crate::hamiltonian::Coefficient::Oscillating { amplitude, .. } => amplitude.norm(),
        };
        let row_sum = term
            .operator
            .matrix()
            .rows()
            .into_iter()
            .map(|r| r.iter().fold(T::zero(), |s, z| s + z.norm()))
            .fold(T::zero(), T::max);
        acc + amp * row_sum
    });
    if bound > T::zero() {
        by_frequency.min(T::one() / bound)
    } else {
        by_frequency
    }
}

/// Compressed sparse rows, used only to apply Hamiltonian terms quickly.
#[derive(Debug, Clone)]
struct Csr<T> {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C<T>>,
}

impl<T: Real> Csr<T> {
    fn from_dense(m: &Array2<C<T>>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in m.rows() {
            for (j, &z) in row.iter().enumerate() {
                if !z.is_zero() {
                    cols.push(j);
                    vals.push(z);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    /// `out += k · (self · x)` for a row-major block `x`.
    fn left_mul_add(&self, k: C<T>, x: &[C<T>], out: &mut [C<T>], width: usize) {
        for r in 0..self.row_ptr.len() - 1 {
            let dst = &mut out[r * width..(r + 1) * width];
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let w = k * self.vals[idx];
                let src = &x[self.cols[idx] * width..(self.cols[idx] + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *d + w * *s;
                }
            }
        }
    }

    /// `out += k · (x · self)` for a square row-major `x`.
    fn right_mul_add(&self, k: C<T>, x: &[C<T>], out: &mut [C<T>], dim: usize) {
        for r in 0..self.row_ptr.len() - 1 {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let w = k * self.vals[idx];
                let c = self.cols[idx];
                for i in 0..dim {
                    out[i * dim + c] = out[i * dim + c] + x[i * dim + r] * w;
                }
            }
        }
    }
}

struct CompiledHamiltonian<T> {
    terms: Vec<(crate::hamiltonian::Coefficient<T>, Csr<T>)>,
}

impl<T: Real> CompiledHamiltonian<T> {
    fn new(h: &TimeDependentHamiltonian<T>) -> Self {
        Self {
            terms: h
                .terms()
                .iter()
                .map(|t| (t.coefficient, Csr::from_dense(t.operator.matrix())))
                .collect(),
        }
    }
}

/// Right-hand side of a linear matrix ODE `dX/dt = f(t, X)`.
trait System<T: Real> {
    fn rhs(&self, t: T, x: &Array2<C<T>>, out: &mut Array2<C<T>>);
}

/// `dX/dt = −i H(t) X`, column by column.
struct Schrodinger<T> {
    h: CompiledHamiltonian<T>,
}

impl<T: Real> System<T> for Schrodinger<T> {
    fn rhs(&self, t: T, x: &Array2<C<T>>, out: &mut Array2<C<T>>) {
        out.fill(C::zero());
        let width = x.ncols();
        let xs = x.as_slice().expect("standard layout");
        let os = out.as_slice_mut().expect("standard layout");
        let minus_i = C::new(T::zero(), -T::one());
        for (coeff, op) in &self.h.terms {
            op.left_mul_add(minus_i * coeff.at(t), xs, os, width);
        }
    }
}

/// Cavity damping `κ(1+n̄) D[a] + κn̄ D[a†]` on top of `−i[H, ρ]`.
struct Lindblad<T> {
    h: CompiledHamiltonian<T>,
    jumps: Vec<(T, Csr<T>, Csr<T>, Csr<T>)>, // rate, L, L†, L†L
}

impl<T: Real> System<T> for Lindblad<T> {
    fn rhs(&self, t: T, rho: &Array2<C<T>>, out: &mut Array2<C<T>>) {
        let dim = rho.nrows();
        out.fill(C::zero());
        let xs = rho.as_slice().expect("standard layout");
        let os = out.as_slice_mut().expect("standard layout");
        let i = C::new(T::zero(), T::one());
        for (coeff, op) in &self.h.terms {
            let k = coeff.at(t);
            op.left_mul_add(-i * k, xs, os, dim);
            op.right_mul_add(i * k, xs, os, dim);
        }
        let mut scratch = vec![C::zero(); dim * dim];
        for (rate, l, ldag, ldl) in &self.jumps {
            let r = re(*rate);
            scratch.iter_mut().for_each(|z| *z = C::zero());
            l.left_mul_add(C::one(), xs, &mut scratch, dim);
            ldag.right_mul_add(r, &scratch, os, dim);
            let half = re(-*rate * T::of(0.5));
            ldl.left_mul_add(half, xs, os, dim);
            ldl.right_mul_add(half, xs, os, dim);
        }
    }
}

fn rk4<T: Real, S: System<T>>(
    system: &S,
    x0: &Array2<C<T>>,
    t0: T,
    t1: T,
    steps: usize,
    monitor: &dyn Fn(&Array2<C<T>>) -> T,
) -> (Array2<C<T>>, T) {
    let h = (t1 - t0) / T::of_usize(steps);
    let half = h * T::of(0.5);
    let sixth = re(h / T::of(6.0));
    let mut x = x0.clone();
    let mut k1 = Array2::zeros(x.raw_dim());
    let mut k2 = Array2::zeros(x.raw_dim());
    let mut k3 = Array2::zeros(x.raw_dim());
    let mut k4 = Array2::zeros(x.raw_dim());
    let mut tmp = Array2::zeros(x.raw_dim());
    let mut worst = monitor(&x);
    for step in 0..steps {
        let t = t0 + h * T::of_usize(step);
        system.rhs(t, &x, &mut k1);
        ndarray::Zip::from(&mut tmp).and(&x).and(&k1).for_each(|o, &a, &b| *o = a + b * re(half));
        system.rhs(t + half, &tmp, &mut k2);
        ndarray::Zip::from(&mut tmp).and(&x).and(&k2).for_each(|o, &a, &b| *o = a + b * re(half));
        system.rhs(t + half, &tmp, &mut k3);
        ndarray::Zip::from(&mut tmp).and(&x).and(&k3).for_each(|o, &a, &b| *o = a + b * re(h));
        system.rhs(t + h, &tmp, &mut k4);
        let two = re(T::of(2.0));
        ndarray::Zip::from(&mut x)
            .and(&k1)
            .and(&k2)
            .and(&k3)
            .and(&k4)
            .for_each(|o, &a, &b, &c, &d| *o = *o + (a + b * two + c * two + d) * sixth);
        worst = worst.max(monitor(&x));
    }
    (x, worst)
}

/// Outcome of a numerical integration.
#[derive(Debug, Clone)]
pub struct Integration<T: Real> {
    /// Final block (columns of states, or a density matrix).
    pub states: Array2<C<T>>,
    pub steps: usize,
    /// Max-entry change between the last two refinements (`None` for fixed step).
    pub self_convergence: Option<T>,
    /// Largest value of the monitor over the accepted run.
    pub monitor_max: T,
}

fn integrate<T: Real, S: System<T>>(
    system: &S,
    x0: &Array2<C<T>>,
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
    natural_dt: T,
    monitor: &dyn Fn(&Array2<C<T>>) -> T,
) -> Result<Integration<T>> {
    cfg.validate()?;
    let span = t1 - t0;
    if !span.is_finite() {
        return Err(Error::InvalidArgument("integration interval must be finite".into()));
    }
    if span == T::zero() {
        return Ok(Integration { states: x0.clone(), steps: 0, self_convergence: Some(T::zero()), monitor_max: monitor(x0) });
    }
    let steps_for = |dt: T| (span.abs() / dt).ceil().to_usize().unwrap_or(1).max(1);
    let finite = |x: &Array2<C<T>>| x.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    match cfg.method {
        Method::FixedStep { dt } => {
            let steps = steps_for(dt);
            let (states, monitor_max) = rk4(system, x0, t0, t1, steps, monitor);
            if !finite(&states) {
                return Err(Error::NonConvergence(format!("non-finite state after {steps} fixed steps")));
            }
            Ok(Integration { states, steps, self_convergence: None, monitor_max })
        }
        Method::Adaptive { tolerance, initial_dt, max_doublings } => {
            let mut steps = steps_for(initial_dt.unwrap_or(natural_dt));
            let (mut coarse, _) = rk4(system, x0, t0, t1, steps, monitor);
            for _ in 0..max_doublings {
                steps *= 2;
                let (fine, monitor_max) = rk4(system, x0, t0, t1, steps, monitor);
                if !finite(&fine) {
                    return Err(Error::NonConvergence(format!("non-finite state at {steps} steps")));
                }
                let change = if finite(&coarse) { linalg::max_abs_diff(&fine, &coarse) } else { T::infinity() };
                if change < tolerance {
                    return Ok(Integration { states: fine, steps, self_convergence: Some(change), monitor_max });
                }
                coarse = fine;
            }
            Err(Error::NonConvergence(format!(
                "no self-convergence to {tolerance:e} after {max_doublings} step doublings ({steps} steps)"
            )))
        }
    }
}

fn top_levels<T: Real>(spec: &HilbertSpec<T>) -> impl Fn(usize) -> bool {
    let c = spec.fock_cutoff;
    move |idx| idx % c + 2 >= c
}

/// Top-two-Fock-level population of a block, maximized over column groups.
///
/// `groups[k]` lists the `(column, weight)` pairs whose weighted sum forms
/// one group; `None` treats every column as its own group of weight one.
fn column_leakage<T: Real>(spec: &HilbertSpec<T>, groups: Option<Vec<Vec<(usize, T)>>>) -> impl Fn(&Array2<C<T>>) -> T {
    let top = top_levels(spec);
    move |x: &Array2<C<T>>| {
        let per_col: Vec<T> = x
            .axis_iter(Axis(1))
            .map(|col| {
                let total = col.iter().fold(T::zero(), |s, z| s + z.norm_sqr());
                let high = col
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| top(*i))
                    .fold(T::zero(), |s, (_, z)| s + z.norm_sqr());
                if total > T::zero() { high / total } else { T::zero() }
            })
            .collect();
        match &groups {
            Some(gs) => gs
                .iter()
                .map(|g| g.iter().fold(T::zero(), |s, &(k, p)| s + per_col[k] * p))
                .fold(T::zero(), T::max),
            None => per_col.into_iter().fold(T::zero(), T::max),
        }
    }
}

/// Integrates `dX/dt = −iH(t)X` for a block of column states.
///
/// The monitor reports the largest top-two-Fock-level population of any
/// column over the accepted run.
pub fn evolve_columns<T: Real>(
    h: &TimeDependentHamiltonian<T>,
    columns: &Array2<C<T>>,
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Integration<T>> {
    if columns.nrows() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: columns.nrows() });
    }
    let system = Schrodinger { h: CompiledHamiltonian::new(h) };
    let x0 = columns.as_standard_layout().to_owned();
    integrate(&system, &x0, t0, t1, cfg, default_step(h), &column_leakage(h.spec(), None))
}

/// Time-evolved state together with integration diagnostics.
#[derive(Debug, Clone)]
pub struct Evolution<T: Real> {
    pub state: QuantumState<T>,
    pub steps: usize,
    pub self_convergence: Option<T>,
    /// Largest population in the two highest Fock levels along the trajectory.
    pub max_leakage: T,
}

/// Weighted pure-state ensembles evolved together.
#[derive(Debug, Clone)]
pub struct EnsembleEvolution<T: Real> {
    /// Final `(weight, state)` members, grouped as on input.
    pub groups: Vec<Vec<(T, Array1<C<T>>)>>,
    pub steps: usize,
    pub self_convergence: Option<T>,
    /// Largest weighted top-two-level population of any group along the trajectory.
    pub max_leakage: T,
}

impl<T: Real> EnsembleEvolution<T> {
    /// `Σ_k p_k |ψ_k⟩⟨ψ_k|` for group `g`.
    pub fn density(&self, g: usize) -> Array2<C<T>> {
        let dim = self.groups[g].first().map_or(0, |(_, v)| v.len());
        let mut rho = Array2::zeros((dim, dim));
        for (p, v) in &self.groups[g] {
            rho = rho + linalg::outer(v, v).mapv(|z| z * re(*p));
        }
        rho
    }
}

/// Evolves several ensembles in one integration; each group typically
/// holds one atomic input tensored with the members of a field ensemble.
pub fn evolve_ensembles<T: Real>(
    h: &TimeDependentHamiltonian<T>,
    groups: &[Vec<(T, Array1<C<T>>)>],
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<EnsembleEvolution<T>> {
    let total: usize = groups.iter().map(Vec::len).sum();
    let mut block = Array2::zeros((h.dim(), total));
    let mut layout = Vec::with_capacity(groups.len());
    let mut k = 0;
    for group in groups {
        let mut members = Vec::with_capacity(group.len());
        for (p, v) in group {
            if v.len() != h.dim() {
                return Err(Error::DimensionMismatch { expected: h.dim(), found: v.len() });
            }
            block.column_mut(k).assign(v);
            members.push((k, *p));
            k += 1;
        }
        layout.push(members);
    }
    let system = Schrodinger { h: CompiledHamiltonian::new(h) };
    let monitor = column_leakage(h.spec(), Some(layout.clone()));
    let out = integrate(&system, &block, t0, t1, cfg, default_step(h), &monitor)?;
    let groups = layout
        .iter()
        .map(|members| members.iter().map(|&(k, p)| (p, out.states.column(k).to_owned())).collect())
        .collect();
    Ok(EnsembleEvolution { groups, steps: out.steps, self_convergence: out.self_convergence, max_leakage: out.monitor_max })
}

/// Evolves `state` from `t0` to `t1` under `h`.
///
/// Mixed states are propagated as their eigen-ensemble.
pub fn evolve_between<T: Real>(
    h: &TimeDependentHamiltonian<T>,
    state: &QuantumState<T>,
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Evolution<T>> {
    if state.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: state.dim() });
    }
    let out = evolve_ensembles(h, &[state.ensemble(T::zero())], t0, t1, cfg)?;
    let state = match state {
        QuantumState::Pure(_) => QuantumState::Pure(out.groups[0][0].1.clone()),
        QuantumState::Mixed(_) => QuantumState::mixed_unchecked(out.density(0)),
    };
    Ok(Evolution { state, steps: out.steps, self_convergence: out.self_convergence, max_leakage: out.max_leakage })
}

/// Evolves `state` from `t = 0` to `t_final`.
pub fn evolve<T: Real>(
    h: &TimeDependentHamiltonian<T>,
    state: &QuantumState<T>,
    t_final: T,
    cfg: &IntegratorConfig<T>,
) -> Result<QuantumState<T>> {
    Ok(evolve_between(h, state, T::zero(), t_final, cfg)?.state)
}

/// Time-ordered propagator `U(t1, t0)`, refused above `cfg.max_dim`.
pub fn propagator<T: Real>(
    h: &TimeDependentHamiltonian<T>,
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<LinearOperator<T>> {
    if h.dim() > cfg.max_dim {
        return Err(Error::DimensionTooLarge { dim: h.dim(), limit: cfg.max_dim });
    }
    let out = evolve_columns(h, &linalg::identity(h.dim()), t0, t1, cfg)?;
    Ok(LinearOperator::new_unchecked(out.states))
}

/// Single-mode cavity damping into a thermal bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityDamping<T> {
    /// Energy decay rate κ.
    pub kappa: T,
    /// Bath occupation n̄.
    pub nbar_bath: T,
}

impl<T: Real> CavityDamping<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= T::zero()) {
            return Err(Error::InvalidArgument(format!("decay rate must be >= 0, got {}", self.kappa)));
        }
        if !(self.nbar_bath >= T::zero()) {
            return Err(Error::InvalidArgument(format!("bath occupation must be >= 0, got {}", self.nbar_bath)));
        }
        Ok(())
    }
}

/// Lindblad evolution from `t0` to `t1`:
/// `dρ/dt = −i[H, ρ] + κ(1+n̄) D[a]ρ + κn̄ D[a†]ρ` with
/// `D[L]ρ = LρL† − ½{L†L, ρ}`.
pub fn lindblad_evolve_between<T: Real>(
    h: &TimeDependentHamiltonian<T>,
    rho0: &QuantumState<T>,
    damping: CavityDamping<T>,
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Evolution<T>> {
    damping.validate()?;
    if rho0.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: rho0.dim() });
    }
    let spec = h.spec();
    let a = operators::annihilation(spec).into_matrix();
    let ad = linalg::dagger(&a);
    let jump = |rate: T, l: &Array2<C<T>>| {
        let ldag = linalg::dagger(l);
        let ldl = ldag.dot(l);
        (rate, Csr::from_dense(l), Csr::from_dense(&ldag), Csr::from_dense(&ldl))
    };
    let mut jumps = Vec::new();
    if damping.kappa > T::zero() {
        jumps.push(jump(damping.kappa * (T::one() + damping.nbar_bath), &a));
        if damping.nbar_bath > T::zero() {
            jumps.push(jump(damping.kappa * damping.nbar_bath, &ad));
        }
    }
    let system = Lindblad { h: CompiledHamiltonian::new(h), jumps };
    let top = top_levels(spec);
    let monitor = move |rho: &Array2<C<T>>| {
        rho.diag().iter().enumerate().filter(|(i, _)| top(*i)).fold(T::zero(), |s, (_, z)| s + z.re)
    };
    let dt = default_step(h).min(if damping.kappa > T::zero() { T::of(0.1) / damping.kappa } else { T::infinity() });
    let rho = rho0.density().as_standard_layout().to_owned();
    let out = integrate(&system, &rho, t0, t1, cfg, dt, &monitor)?;
    Ok(Evolution {
        state: QuantumState::mixed_unchecked(out.states),
        steps: out.steps,
        self_convergence: out.self_convergence,
        max_leakage: out.monitor_max,
    })
}

/// Lindblad evolution from `t = 0` to `t_final`.
pub fn lindblad_evolve<T: Real>(
    h: &TimeDependentHamiltonian<T>,
    rho0: &QuantumState<T>,
    kappa: T,
    nbar_bath: T,
    t_final: T,
    cfg: &IntegratorConfig<T>,
) -> Result<QuantumState<T>> {
    Ok(lindblad_evolve_between(h, rho0, CavityDamping { kappa, nbar_bath }, T::zero(), t_final, cfg)?.state)
}

/// Copies the `n < cutoff` block out of an operator defined on a padded Fock space.
pub fn compress_fock<T: Real>(
    padded: &HilbertSpec<T>,
    op: &Array2<C<T>>,
    cutoff: usize,
) -> Result<Array2<C<T>>> {
    if cutoff > padded.fock_cutoff {
        return Err(Error::InvalidArgument(format!(
            "cannot compress to {cutoff} levels from {}",
            padded.fock_cutoff
        )));
    }
    let na = padded.atom_dim();
    Ok(Array2::from_shape_fn((na * cutoff, na * cutoff), |(i, j)| {
        op[[padded.index(i / cutoff, i % cutoff), padded.index(j / cutoff, j % cutoff)]]
    }))
}

/// Columns `|atoms, n⟩` of the padded space for all atomic indices and `n < cutoff`.
pub fn fock_block_columns<T: Real>(padded: &HilbertSpec<T>, cutoff: usize) -> Array2<C<T>> {
    let na = padded.atom_dim();
    let mut cols = Array2::zeros((padded.dim(), na * cutoff));
    for atoms in 0..na {
        for n in 0..cutoff {
            cols[[padded.index(atoms, n), atoms * cutoff + n]] = C::one();
        }
    }
    cols
}

/// Time-ordered integration of the effective Hamiltonian on a Fock space
/// padded by `padding` levels, compressed back to `spec.fock_cutoff`.
///
/// Independent oracle for [`effective_propagator`].
pub fn integrated_effective_propagator<T: Real>(
    spec: &HilbertSpec<T>,
    t: T,
    padding: usize,
    cfg: &IntegratorConfig<T>,
) -> Result<LinearOperator<T>> {
    let padded = spec.with_cutoff(spec.fock_cutoff + padding)?;
    let h = crate::hamiltonian::build_effective(&padded);
    // The collective coupling is diagonal in the |±…±⟩ product basis, so each
    // product state carries its own driven-oscillator block; those blocks are
    // integrated separately. Rotated entries below rounding level are dropped.
    let w = (0..spec.n_atoms).fold(linalg::identity(1), |acc, _| linalg::kron(&acc, &operators::basis_change::<T>()));
    let (na, c, cp) = (spec.atom_dim(), spec.fock_cutoff, padded.fock_cutoff);
    let field_block = |m: &Array2<C<T>>, s: usize, r: usize| {
        prune(Array2::from_shape_fn((cp, cp), |(i, j)| {
            let mut acc = C::zero();
            for a in 0..na {
                for b in 0..na {
                    acc = acc + w[[a, s]] * m[[padded.index(a, i), padded.index(b, j)]] * w[[b, r]];
                }
            }
            acc
        }))
    };
    let scale = h.terms().iter().fold(T::zero(), |acc, term| acc.max(linalg::max_abs(term.operator.matrix())));
    let x0 = Array2::from_shape_fn((cp, c), |(i, j)| if i == j { C::one() } else { C::zero() });
    let mut blocks = Vec::with_capacity(na);
    for s in 0..na {
        for r in (0..na).filter(|&r| r != s) {
            for term in h.terms() {
                let leak = linalg::max_abs(&field_block(term.operator.matrix(), s, r));
                if leak > scale * T::of(1e-12) {
                    return Err(Error::InvalidState(format!("effective coupling mixes product states ({leak:e})")));
                }
            }
        }
        let terms: Vec<_> = h
            .terms()
            .iter()
            .map(|term| (term.coefficient, Csr::from_dense(&field_block(term.operator.matrix(), s, s))))
            .collect();
        if terms.iter().all(|(_, m)| m.vals.is_empty()) {
            blocks.push(x0.clone());
            continue;
        }
        let system = Schrodinger { h: CompiledHamiltonian { terms } };
        let out = integrate(&system, &x0, T::zero(), t, cfg, default_step(&h), &|_| T::zero())?;
        blocks.push(out.states);
    }
    Ok(LinearOperator::new_unchecked(Array2::from_shape_fn((na * c, na * c), |(i, j)| {
        let (a, n) = (i / c, i % c);
        let (b, m) = (j / c, j % c);
        (0..na).fold(C::zero(), |acc, s| acc + w[[a, s]] * blocks[s][[n, m]] * w[[b, s]])
    })))
}

/// Zeroes entries below a few ulps of the largest one.
fn prune<T: Real>(m: Array2<C<T>>) -> Array2<C<T>> {
    let floor = linalg::max_abs(&m) * T::epsilon() * T::of(64.0);
    m.mapv(|z| if z.norm() <= floor { C::zero() } else { z })
}

/// Norm of a state vector, exposed for diagnostics.
pub fn state_norm<T: Real>(v: &Array1<C<T>>) -> T {
    linalg::norm(v)
}
