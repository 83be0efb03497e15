//! Coordinate-progress dynamics for chain instances: the reachable-coordinate
//! tracker, Monte Carlo and exhaustive verification of the advancement
//! bounds, and the helper function g.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Tracks the largest coordinate index reachable by a compliant algorithm.
/// The window keeps the last floor(n/2) queried component indices; on early
/// steps it simply holds everything seen so far.
#[derive(Debug, Clone)]
pub struct SpanState {
    ell: usize,
    window: VecDeque<usize>,
    window_cap: usize,
    d: usize,
    t: usize,
}

impl SpanState {
    pub fn new(n: usize, d: usize) -> Self {
        Self { ell: 1, window: VecDeque::new(), window_cap: n / 2, d, t: 1 }
    }

    /// Current reachable-coordinate bound, in [1, d-1].
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn step(&self) -> usize {
        self.t
    }

    /// Pushes the queried index i_t, then advances ell to the largest value
    /// in {ell..d-1} such that every owner j_ell..j_{new_ell - 1} is in the
    /// window. Owners are 1-based values; owners[l-1] is the owner of the
    /// coupling between coordinates l and l+1.
    pub fn advance(&mut self, i_t: usize, owners: &[usize]) {
        if self.window_cap > 0 {
            if self.window.len() == self.window_cap {
                self.window.pop_front();
            }
            self.window.push_back(i_t);
        }
        while self.ell < self.d - 1 && self.window.contains(&owners[self.ell - 1]) {
            self.ell += 1;
        }
        self.t += 1;
    }
}

/// Replays an oblivious schedule against freshly sampled owners and reports
/// the mean and standard error of the final reachable coordinate, alongside
/// the analytic bound 1 + 2(T-1)/n.
#[derive(Debug, Clone, Copy)]
pub struct ProgressEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
}

pub fn expected_progress_mc(
    n: usize,
    d: usize,
    t_final: usize,
    schedule: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ProgressEstimate> {
    if trials < 1 || t_final < 1 || d < 2 {
        return Err(Error::InvalidParam("require trials >= 1, T >= 1, d >= 2".into()));
    }
    if schedule.len() + 1 < t_final {
        return Err(Error::InvalidParam(format!(
            "schedule length {} too short for T = {t_final}",
            schedule.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let owners: Vec<usize> = (0..d - 1).map(|_| rng.gen_range(1..=n)).collect();
        let mut state = SpanState::new(n, d);
        for &i_t in schedule.iter().take(t_final - 1) {
            state.advance(i_t, &owners);
        }
        let ell = state.ell() as f64;
        sum += ell;
        sum_sq += ell * ell;
    }
    let trials_f = trials as f64;
    let mean = sum / trials_f;
    let var = (sum_sq / trials_f - mean * mean).max(0.0);
    let stderr = (var / trials_f).sqrt();
    Ok(ProgressEstimate { mean, stderr, bound: 1.0 + 2.0 * (t_final as f64 - 1.0) / n as f64 })
}

/// Like expected_progress_mc, but redraws a uniform i.i.d. schedule for each
/// trial. The analytic bound's per-step 1/n advancement probability needs the
/// queried index independent of the couplings; averaging over the schedule
/// draw restores that independence, whereas any one fixed realization
/// conditions the frontier coupling away from recently queried indices and
/// can exceed the bound.
pub fn expected_progress_mc_uniform(
    n: usize,
    d: usize,
    t_final: usize,
    trials: usize,
    seed: u64,
) -> Result<ProgressEstimate> {
    if trials < 1 || t_final < 1 || d < 2 {
        return Err(Error::InvalidParam("require trials >= 1, T >= 1, d >= 2".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let owners: Vec<usize> = (0..d - 1).map(|_| rng.gen_range(1..=n)).collect();
        let mut state = SpanState::new(n, d);
        for _ in 0..t_final - 1 {
            state.advance(rng.gen_range(1..=n), &owners);
        }
        let ell = state.ell() as f64;
        sum += ell;
        sum_sq += ell * ell;
    }
    let trials_f = trials as f64;
    let mean = sum / trials_f;
    let var = (sum_sq / trials_f - mean * mean).max(0.0);
    let stderr = (var / trials_f).sqrt();
    Ok(ProgressEstimate { mean, stderr, bound: 1.0 + 2.0 * (t_final as f64 - 1.0) / n as f64 })
}

/// Exact E[ell_T] for a fixed schedule by enumerating all n^(d-1) owner
/// tuples.
pub fn exact_expected_progress(n: usize, d: usize, t_final: usize, schedule: &[usize]) -> Result<f64> {
    let tuples = (n as u128).checked_pow(d as u32 - 1).ok_or_else(|| {
        Error::BudgetExceeded("owner tuple count overflows".into())
    })?;
    if tuples > 1_000_000 {
        return Err(Error::BudgetExceeded(format!("{tuples} owner tuples")));
    }
    let mut owners = vec![1usize; d - 1];
    let mut sum = 0.0;
    loop {
        let mut state = SpanState::new(n, d);
        for &i_t in schedule.iter().take(t_final - 1) {
            state.advance(i_t, &owners);
        }
        sum += state.ell() as f64;
        // mixed-radix increment
        let mut pos = d - 1;
        loop {
            if pos == 0 {
                return Ok(sum / tuples as f64);
            }
            pos -= 1;
            if owners[pos] < n {
                owners[pos] += 1;
                break;
            }
            owners[pos] = 1;
        }
    }
}

/// Worst case, over all index schedules, of the owner-tuple-averaged final
/// reachable coordinate, with the analytic bound. Exhaustive; desk scale
/// only.
#[derive(Debug, Clone)]
pub struct AdversarialAverage {
    pub max_average: f64,
    pub bound: f64,
    pub worst_schedule: Vec<usize>,
}

pub fn adversarial_average(n: usize, d: usize, t_final: usize) -> Result<AdversarialAverage> {
    if n > 3 || d > 4 || t_final > 6 {
        return Err(Error::BudgetExceeded(format!(
            "exhaustive enumeration limited to n <= 3, d <= 4, T <= 6 (got n={n}, d={d}, T={t_final})"
        )));
    }
    if t_final < 1 || d < 2 {
        return Err(Error::InvalidParam("require T >= 1 and d >= 2".into()));
    }
    let steps = t_final - 1;
    let bound = 1.0 + 2.0 * (t_final as f64 - 1.0) / n as f64;
    let mut best = AdversarialAverage { max_average: 1.0, bound, worst_schedule: vec![1; steps] };
    let num_schedules = n.pow(steps as u32);
    for code in 0..num_schedules {
        let mut c = code;
        let schedule: Vec<usize> = (0..steps)
            .map(|_| {
                let i = c % n + 1;
                c /= n;
                i
            })
            .collect();
        let avg = exact_expected_progress(n, d, t_final, &schedule)?;
        if avg > best.max_average {
            best.max_average = avg;
            best.worst_schedule = schedule;
        }
    }
    Ok(best)
}

/// g(z) = q^(2(z+1)) for z < d, else 0.
pub fn g_value(q: f64, d: usize, z: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParam(format!("require q in (0,1), got {q}")));
    }
    if z >= d as f64 {
        Ok(0.0)
    } else {
        Ok(q.powf(2.0 * (z + 1.0)))
    }
}

/// Checks the averaging inequality behind the lower bound: for non-negative
/// samples with mean <= d/2, the sample average of g dominates half the g of
/// the sample mean.
pub fn jensen_bound_check(q: f64, d: usize, samples: &[f64]) -> Result<bool> {
    if samples.is_empty() {
        return Err(Error::InvalidParam("require at least one sample".into()));
    }
    if samples.iter().any(|&a| a < 0.0) {
        return Err(Error::InvalidParam("samples must be non-negative".into()));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if mean > d as f64 / 2.0 {
        return Err(Error::InvalidParam(format!(
            "sample mean {mean} exceeds d/2 = {}",
            d as f64 / 2.0
        )));
    }
    let avg_g = samples.iter().map(|&a| g_value(q, d, a)).sum::<Result<f64>>()?
        / samples.len() as f64;
    let rhs = 0.5 * q.powf(2.0 * mean + 2.0);
    Ok(avg_g >= rhs * (1.0 - 1e-12))
}

/// Replays the reachable-coordinate dynamics along a recorded run and checks
/// that every queried iterate is supported on {1..ell_t} plus coordinate d.
/// `trace` holds (component index, query point) pairs in call order.
pub fn iterate_support_audit(
    trace: &[(usize, Vec<f64>)],
    owners: &[usize],
    n: usize,
    d: usize,
) -> bool {
    const ZERO_TOL: f64 = 1e-10;
    let mut state = SpanState::new(n, d);
    for (i_t, point) in trace {
        let ell = state.ell();
        // Coordinates ell+1..d-1 (1-based) must vanish; coordinate d is
        // always in the span.
        for coord in ell..d.saturating_sub(1) {
            if point[coord].abs() > ZERO_TOL {
                return false;
            }
        }
        state.advance(*i_t, owners);
    }
    true
}
