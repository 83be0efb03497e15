//! Reference optimizers with declared compliance flags. Every run owns a
//! call ledger (with recorded query points) so the obliviousness and
//! iterate-support audits can replay it; traces sample the suboptimality
//! ratio at oracle-call granularity for the envelope race.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::oracle::{query, suboptimality_ratio, CallLedger, FiniteSum, StructuredHessian};

/// Divergence cutoffs: a ratio beyond this (or any non-finite value) flags
/// the run and stops it.
const DIVERGENCE_RATIO: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct OptimizerTrace {
    pub name: String,
    /// Index schedule fixed before any query.
    pub oblivious: bool,
    /// Iterates built only from windowed linear-algebraic operations.
    pub linear_algebraic: bool,
    /// Exempt from the envelope race (documents why the compliance
    /// assumptions are necessary).
    pub exempt: bool,
    /// (cumulative oracle calls, suboptimality ratio), calls strictly
    /// increasing.
    pub samples: Vec<(u64, f64)>,
    pub final_iterate: Vec<f64>,
    pub diverged: bool,
    pub ledger: CallLedger,
    pub declared_schedule: Vec<usize>,
}

impl OptimizerTrace {
    /// (index, query point) pairs in call order, for the support audit.
    pub fn audit_trace(&self) -> Vec<(usize, Vec<f64>)> {
        self.ledger
            .entries()
            .iter()
            .map(|e| (e.index, e.point.clone().expect("ledger records points")))
            .collect()
    }
}

struct RunState<'a, I: FiniteSum + ?Sized> {
    instance: &'a I,
    ledger: CallLedger,
    schedule: Vec<usize>,
    cursor: usize,
    samples: Vec<(u64, f64)>,
    diverged: bool,
}

impl<'a, I: FiniteSum + ?Sized> RunState<'a, I> {
    fn new(instance: &'a I, schedule: Vec<usize>) -> Result<Self> {
        let mut s = Self {
            instance,
            ledger: CallLedger::with_points(instance.n()),
            schedule,
            cursor: 0,
            samples: Vec::new(),
            diverged: false,
        };
        let zero = vec![0.0; instance.dim()];
        let r0 = suboptimality_ratio(instance, &zero)?;
        s.samples.push((0, r0));
        Ok(s)
    }

    /// Queries the next scheduled component at w.
    fn call(&mut self, w: &[f64]) -> Result<crate::oracle::OracleResponse> {
        let i = self.schedule[self.cursor];
        self.cursor += 1;
        query(self.instance, w, i, &mut self.ledger)
    }

    /// Records the ratio at w; returns false when the run diverged.
    fn sample(&mut self, w: &[f64]) -> Result<bool> {
        let ratio = suboptimality_ratio(self.instance, w)?;
        self.samples.push((self.ledger.total(), ratio));
        if !ratio.is_finite() || ratio > DIVERGENCE_RATIO || w.iter().any(|x| !x.is_finite()) {
            self.diverged = true;
            return Ok(false);
        }
        Ok(true)
    }

    fn finish(
        self,
        name: &str,
        oblivious: bool,
        linear_algebraic: bool,
        exempt: bool,
        final_iterate: Vec<f64>,
    ) -> OptimizerTrace {
        OptimizerTrace {
            name: name.into(),
            oblivious,
            linear_algebraic,
            exempt,
            samples: self.samples,
            final_iterate,
            diverged: self.diverged,
            ledger: self.ledger,
            declared_schedule: self.schedule,
        }
    }
}

fn identity_passes(n: usize, passes: usize) -> Vec<usize> {
    (0..passes).flat_map(|_| 1..=n).collect()
}

/// One full pass over the scheduled components at w: averaged gradient.
fn full_pass_gradient<I: FiniteSum + ?Sized>(
    state: &mut RunState<I>,
    w: &[f64],
) -> Result<Vec<f64>> {
    let n = state.instance.n();
    let mut g = vec![0.0; w.len()];
    for _ in 0..n {
        let resp = state.call(w)?;
        for (a, b) in g.iter_mut().zip(&resp.gradient) {
            *a += b / n as f64;
        }
    }
    Ok(g)
}

/// Gradient descent on F with step 1/mu; each step is one full pass.
pub fn run_gd<I: FiniteSum + ?Sized>(instance: &I, mu: f64, passes: usize) -> Result<OptimizerTrace> {
    let n = instance.n();
    let mut state = RunState::new(instance, identity_passes(n, passes))?;
    let mut w = vec![0.0; instance.dim()];
    for _ in 0..passes {
        let g = full_pass_gradient(&mut state, &w)?;
        for (x, gi) in w.iter_mut().zip(&g) {
            *x -= gi / mu;
        }
        if !state.sample(&w)? {
            break;
        }
    }
    Ok(state.finish("gd", true, true, false, w))
}

/// Accelerated gradient descent with the constant-momentum strongly convex
/// schedule tuned to F's own smoothness (mu - lambda)/n + lambda.
pub fn run_agd<I: FiniteSum + ?Sized>(
    instance: &I,
    mu: f64,
    lambda: f64,
    passes: usize,
) -> Result<OptimizerTrace> {
    let n = instance.n();
    let mu_f = (mu - lambda) / n as f64 + lambda;
    let sqrt_cond = (mu_f / lambda).sqrt();
    let beta = (sqrt_cond - 1.0) / (sqrt_cond + 1.0);

    let mut state = RunState::new(instance, identity_passes(n, passes))?;
    let d = instance.dim();
    let mut w = vec![0.0; d];
    let mut y = vec![0.0; d];
    for _ in 0..passes {
        let g = full_pass_gradient(&mut state, &y)?;
        let w_next: Vec<f64> = y.iter().zip(&g).map(|(&yi, &gi)| yi - gi / mu_f).collect();
        y = w_next
            .iter()
            .zip(&w)
            .map(|(&a, &b)| a + beta * (a - b))
            .collect();
        w = w_next;
        if !state.sample(&w)? {
            break;
        }
    }
    Ok(state.finish("agd", true, true, false, w))
}

/// Full Newton from the origin: queries all n components once, averages all
/// n Hessians (deliberately blowing the floor(n/2) window), and solves for
/// the exact quadratic optimum. Exempt from the envelope race.
pub fn run_newton_full<I: FiniteSum + ?Sized>(instance: &I) -> Result<OptimizerTrace> {
    let n = instance.n();
    let d = instance.dim();
    if d > 2000 {
        return Err(Error::BudgetExceeded("full Newton solves densely, d <= 2000".into()));
    }
    let mut state = RunState::new(instance, identity_passes(n, 1))?;
    let zero = vec![0.0; d];
    let mut g = nalgebra::DVector::zeros(d);
    let mut h = nalgebra::DMatrix::zeros(d, d);
    for _ in 0..n {
        let resp = state.call(&zero)?;
        g += nalgebra::DVector::from_row_slice(&resp.gradient) / n as f64;
        h += resp.hessian.to_dense()? / n as f64;
    }
    let w_vec = h.lu().solve(&(-g)).ok_or_else(|| {
        Error::InvalidParam("averaged Hessian is singular (cannot happen: lambda I floor)".into())
    })?;
    let w: Vec<f64> = w_vec.iter().copied().collect();
    state.sample(&w)?;
    Ok(state.finish("newton_full", true, false, true, w))
}

/// Builds (H_S + rho I) from the structured Hessians of the last
/// `sample_size` calls of a pass, densely.
fn dense_window_hessian(
    hessians: &[StructuredHessian],
    rho: f64,
    d: usize,
) -> Result<nalgebra::DMatrix<f64>> {
    let mut m = nalgebra::DMatrix::<f64>::zeros(d, d);
    for h in hessians {
        m += h.to_dense()? / hessians.len() as f64;
    }
    for k in 0..d {
        m[(k, k)] += rho;
    }
    Ok(m)
}

/// Subsampled Newton: full pass in an obliviously pre-shuffled order, Hessian
/// window from only the last `sample_size <= floor(n/2)` calls of the pass,
/// damped regularized Newton step.
pub fn run_subsampled_newton<I: FiniteSum + ?Sized>(
    instance: &I,
    mu: f64,
    lambda: f64,
    sample_size: usize,
    passes: usize,
    rho: f64,
    seed: u64,
) -> Result<OptimizerTrace> {
    let n = instance.n();
    let d = instance.dim();
    if sample_size < 1 || sample_size > n / 2 {
        return Err(Error::InvalidParam(format!(
            "sample_size {sample_size} outside [1, floor(n/2) = {}]",
            n / 2
        )));
    }
    if d > 2000 {
        return Err(Error::BudgetExceeded("dense Newton window, d <= 2000".into()));
    }
    // Pass orders shuffled up front: the schedule never looks at responses.
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut schedule = Vec::with_capacity(n * passes);
    for _ in 0..passes {
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(&mut rng);
        schedule.extend(order);
    }

    let mu_f = (mu - lambda) / n as f64 + lambda;
    // Damping keeping the (H_S + rho I)^{-1} grad F iteration a contraction:
    // the preconditioned spectrum lies in (0, (mu_f + rho)/(lambda + rho)].
    let damping = (lambda + rho) / (mu_f + rho);

    let mut state = RunState::new(instance, schedule)?;
    let mut w = vec![0.0; d];
    for _ in 0..passes {
        let mut g = vec![0.0; d];
        let mut window: Vec<StructuredHessian> = Vec::with_capacity(sample_size);
        for k in 0..n {
            let resp = state.call(&w)?;
            for (a, b) in g.iter_mut().zip(&resp.gradient) {
                *a += b / n as f64;
            }
            if k >= n - sample_size {
                window.push(resp.hessian);
            }
        }
        let hs = dense_window_hessian(&window, rho, d)?;
        let dir = hs
            .lu()
            .solve(&nalgebra::DVector::from_row_slice(&g))
            .ok_or_else(|| Error::InvalidParam("window Hessian singular".into()))?;
        for (x, di) in w.iter_mut().zip(dir.iter()) {
            *x -= damping * di;
        }
        if !state.sample(&w)? {
            break;
        }
    }
    Ok(state.finish("subsampled_newton", true, true, false, w))
}

/// SVRG-style variance-reduced first-order method: snapshot pass caching
/// per-component gradients, then single-call inner steps.
pub fn run_svrg_like<I: FiniteSum + ?Sized>(
    instance: &I,
    mu: f64,
    epochs: usize,
    inner_steps: usize,
    seed: u64,
) -> Result<OptimizerTrace> {
    let n = instance.n();
    let d = instance.dim();
    let eta = 1.0 / (10.0 * mu);
    // Whole schedule pre-sampled: snapshot pass + uniform inner indices.
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut schedule = Vec::with_capacity(epochs * (n + inner_steps));
    for _ in 0..epochs {
        schedule.extend(1..=n);
        schedule.extend((0..inner_steps).map(|_| rng.gen_range(1..=n)));
    }

    let mut state = RunState::new(instance, schedule)?;
    let mut w = vec![0.0; d];
    'outer: for _ in 0..epochs {
        let snapshot = w.clone();
        let mut cached: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut mean_g = vec![0.0; d];
        for _ in 0..n {
            let resp = state.call(&snapshot)?;
            for (a, b) in mean_g.iter_mut().zip(&resp.gradient) {
                *a += b / n as f64;
            }
            cached.push(resp.gradient);
        }
        for _ in 0..inner_steps {
            let i = state.schedule[state.cursor];
            let resp = state.call(&w)?;
            let anchor = &cached[i - 1];
            for k in 0..d {
                let vr = resp.gradient[k] - anchor[k] + mean_g[k];
                w[k] -= eta * vr;
            }
        }
        if !state.sample(&w)? {
            break 'outer;
        }
    }
    Ok(state.finish("svrg_like", true, true, false, w))
}

/// LiSSA-style truncated Neumann approximate Newton: full-pass gradient, then
/// fresh oblivious Hessian samples drive u <- g + (I - H_i/mu) u; the step
/// direction is u/mu with damping 0.5.
pub fn run_lissa_like<I: FiniteSum + ?Sized>(
    instance: &I,
    mu: f64,
    outer_steps: usize,
    neumann_depth: usize,
    seed: u64,
) -> Result<OptimizerTrace> {
    let n = instance.n();
    let d = instance.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut schedule = Vec::with_capacity(outer_steps * (n + neumann_depth));
    for _ in 0..outer_steps {
        schedule.extend(1..=n);
        schedule.extend((0..neumann_depth).map(|_| rng.gen_range(1..=n)));
    }

    let mut state = RunState::new(instance, schedule)?;
    let mut w = vec![0.0; d];
    const DAMPING: f64 = 0.5;
    for _ in 0..outer_steps {
        let g = full_pass_gradient(&mut state, &w)?;
        let mut u = g.clone();
        for _ in 0..neumann_depth {
            let resp = state.call(&w)?;
            let hu = resp.hessian.matvec(&u)?;
            for k in 0..d {
                u[k] = g[k] + u[k] - hu[k] / mu;
            }
        }
        for k in 0..d {
            w[k] -= DAMPING * u[k] / mu;
        }
        if !state.sample(&w)? {
            break;
        }
    }
    Ok(state.finish("lissa_like", true, true, false, w))
}
