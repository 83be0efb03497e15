//! The locally-flattened quadratic and the resisting oracle that builds its
//! hidden orthonormal directions adaptively against a deterministic
//! algorithm.
//!
//! The objective is F(w) = H(w) + (lambda/2)||w||^2 where H chains the
//! flattening function phi_r through inner products with frame vectors
//! v_1..v_T. During a protocol run the frame is only partially determined;
//! evaluation with a partial frame is legal exactly when the query point has
//! no overlap with the last determined direction, in which case the missing
//! terms contribute nothing.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bounds::q_factor;
use crate::error::{Error, Result};
use crate::oracle::{dot, norm, FiniteSum, OracleResponse, StructuredHessian};

const ORTHO_TOL: f64 = 1e-10;
const SPAN_TOL: f64 = 1e-10;

/// phi_r and its first two derivatives: zero on [-r, r], quadratic splice on
/// r < |z| <= 2r, and z^2 - 2r^2 beyond. 4-smooth, with 0 <= z^2 - phi_r(z)
/// <= 2r^2. r = 0 disables the flattening (plain z^2).
pub fn phi(r: f64, z: f64) -> (f64, f64, f64) {
    debug_assert!(r >= 0.0);
    if r == 0.0 {
        return (z * z, 2.0 * z, 2.0);
    }
    let a = z.abs();
    if a <= r {
        (0.0, 0.0, 0.0)
    } else if a <= 2.0 * r {
        let s = z.signum();
        (2.0 * (a - r) * (a - r), 4.0 * (a - r) * s, 4.0)
    } else {
        (z * z - 2.0 * r * r, 2.0 * z, 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlattenedParams {
    pub mu: f64,
    pub lambda: f64,
    /// Query budget T.
    pub t_budget: usize,
    /// Ambient dimension, fixed to 2T.
    pub d: usize,
    /// Flattening radius.
    pub r: f64,
    /// mu/(8 lambda).
    pub kappa: f64,
    pub q: f64,
    pub a_kappa: f64,
}

impl FlattenedParams {
    pub fn new(mu: f64, lambda: f64, t_budget: usize, r: f64) -> Result<Self> {
        if lambda <= 0.0 || mu <= 8.0 * lambda {
            return Err(Error::InvalidParam(format!(
                "require mu > 8*lambda > 0, got mu={mu}, lambda={lambda}"
            )));
        }
        if t_budget < 2 {
            return Err(Error::InvalidParam("require T >= 2".into()));
        }
        if r < 0.0 {
            return Err(Error::InvalidParam("require r >= 0".into()));
        }
        let kappa = mu / (8.0 * lambda);
        let q = q_factor(kappa)?;
        let t = t_budget as f64;
        if t * mu * r * r / (8.0 * lambda) > 1.0 {
            return Err(Error::InvalidParam(format!("radius {r} violates T mu r^2/(8 lambda) <= 1")));
        }
        if (t * mu * r * r / (16.0 * lambda)).sqrt() > q.powi(t_budget as i32) / 2.0 {
            return Err(Error::InvalidParam(format!(
                "radius {r} violates sqrt(T mu r^2/(16 lambda)) <= q^T/2"
            )));
        }
        Ok(Self {
            mu,
            lambda,
            t_budget,
            d: 2 * t_budget,
            r,
            kappa,
            q,
            a_kappa: (kappa.sqrt() + 3.0) / (kappa.sqrt() + 1.0),
        })
    }

    /// Parameters with the radius from [`choose_radius`].
    pub fn with_chosen_radius(mu: f64, lambda: f64, t_budget: usize) -> Result<Self> {
        let r = choose_radius(mu, lambda, t_budget)?;
        Self::new(mu, lambda, t_budget, r)
    }

    /// lambda (kappa - 1)/8, the overall scale of H.
    fn scale(&self) -> f64 {
        self.lambda * (self.kappa - 1.0) / 8.0
    }
}

/// Half the largest radius satisfying both feasibility constraints; the 0.5
/// safety factor keeps them strictly feasible under rounding.
pub fn choose_radius(mu: f64, lambda: f64, t_budget: usize) -> Result<f64> {
    if lambda <= 0.0 || mu <= 8.0 * lambda {
        return Err(Error::InvalidParam(format!(
            "require mu > 8*lambda > 0, got mu={mu}, lambda={lambda}"
        )));
    }
    if t_budget < 2 {
        return Err(Error::InvalidParam("require T >= 2".into()));
    }
    let t = t_budget as f64;
    let q = q_factor(mu / (8.0 * lambda))?;
    let r1 = (8.0 * lambda / (t * mu)).sqrt();
    let r2 = 2.0 * q.powi(t_budget as i32) * (lambda / (t * mu)).sqrt();
    let r = 0.5 * r1.min(r2);
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParam("no feasible radius".into()));
    }
    Ok(r)
}

/// An ordered orthonormal set v_1..v_k, grown one direction at a time.
#[derive(Debug, Clone, Default)]
pub struct OrthonormalFrame {
    vectors: Vec<Vec<f64>>,
}

impl OrthonormalFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Appends a unit vector orthogonal to all frame vectors and all given
    /// constraint vectors. Modified Gram-Schmidt with one re-orthogonalization
    /// pass; the candidate direction is drawn from the supplied PRNG and
    /// redrawn if the projected residual is too small.
    pub fn extend_orthogonal(&mut self, constraints: &[Vec<f64>], rng: &mut ChaCha12Rng) -> Result<()> {
        let d = if let Some(v) = self.vectors.first() {
            v.len()
        } else {
            constraints
                .first()
                .map(|c| c.len())
                .ok_or_else(|| Error::InvalidParam("cannot infer dimension for empty frame".into()))?
        };

        // Orthonormal basis of the forbidden subspace.
        let mut basis: Vec<Vec<f64>> = self.vectors.clone();
        for c in constraints {
            let mut v = c.clone();
            for b in &basis {
                let p = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
            let nv = norm(&v);
            if nv > 1e-12 * norm(c).max(1.0) {
                for x in v.iter_mut() {
                    *x /= nv;
                }
                basis.push(v);
            }
        }
        if basis.len() >= d {
            return Err(Error::FrameExhausted { attempts: 0 });
        }

        const MAX_DRAWS: usize = 50;
        for _ in 0..MAX_DRAWS {
            let mut v: Vec<f64> = (0..d)
                .map(|_| {
                    // Box-Muller standard normal.
                    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                })
                .collect();
            let nv = norm(&v);
            for x in v.iter_mut() {
                *x /= nv;
            }
            // MGS pass plus one re-orthogonalization pass.
            for _ in 0..2 {
                for b in &basis {
                    let p = dot(&v, b);
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= p * y;
                    }
                }
            }
            let res = norm(&v);
            if res >= 1e-8 {
                for x in v.iter_mut() {
                    *x /= res;
                }
                self.vectors.push(v);
                return Ok(());
            }
        }
        Err(Error::FrameExhausted { attempts: MAX_DRAWS })
    }

    /// Pairwise orthogonality and unit norms within tolerance.
    pub fn check_orthonormal(&self) -> bool {
        for (i, a) in self.vectors.iter().enumerate() {
            if (norm(a) - 1.0).abs() > ORTHO_TOL {
                return false;
            }
            for b in &self.vectors[i + 1..] {
                if dot(a, b).abs() > ORTHO_TOL {
                    return false;
                }
            }
        }
        true
    }
}

/// Exact triple of F at w given k determined frame directions. When k < T,
/// the query must have no overlap with the last determined direction (the
/// protocol guarantees this for its own queries); the undetermined terms then
/// contribute exactly zero and the partial evaluation equals any full-frame
/// completion.
pub fn eval_flattened(
    params: &FlattenedParams,
    frame: &OrthonormalFrame,
    w: &[f64],
) -> Result<OracleResponse> {
    let t_budget = params.t_budget;
    let k = frame.len();
    if k < 1 || k > t_budget {
        return Err(Error::InvalidParam(format!("frame size {k} outside 1..={t_budget}")));
    }
    if w.len() != params.d {
        return Err(Error::DimensionMismatch { expected: params.d, got: w.len() });
    }
    let partial = k < t_budget;
    if partial {
        if params.r == 0.0 {
            return Err(Error::InvalidParam(
                "partial-frame evaluation requires a positive flattening radius".into(),
            ));
        }
        let overlap = dot(&frame.vectors()[k - 1], w).abs();
        if overlap > SPAN_TOL {
            return Err(Error::OutsideDeterminedSpan { overlap });
        }
    }

    let s = params.scale();
    let r = params.r;
    // Frame coordinates, zero-extended over the undetermined directions.
    let mut x = vec![0.0; t_budget];
    for (i, v) in frame.vectors().iter().enumerate() {
        x[i] = dot(v, w);
    }

    let sq: f64 = w.iter().map(|&c| c * c).sum();
    // The -2 x_1 linear coefficient makes the unflattened minimizer exactly
    // sum q^i v_i.
    let mut value = s * (x[0] * x[0] - 2.0 * x[0]) + 0.5 * params.lambda * sq;

    // Per-frame-direction gradient coefficients.
    let mut coef = vec![0.0; t_budget];
    coef[0] += 2.0 * s * (x[0] - 1.0);
    // Hessian coefficients in frame coordinates.
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    *acc.entry((0, 0)).or_default() += 2.0 * s;

    for i in 0..t_budget - 1 {
        let (pv, pd, pdd) = phi(r, x[i] - x[i + 1]);
        value += s * pv;
        coef[i] += s * pd;
        coef[i + 1] -= s * pd;
        if pdd != 0.0 {
            *acc.entry((i, i)).or_default() += s * pdd;
            *acc.entry((i + 1, i + 1)).or_default() += s * pdd;
            *acc.entry((i, i + 1)).or_default() -= s * pdd;
            *acc.entry((i + 1, i)).or_default() -= s * pdd;
        }
    }
    let (bv, bd, bdd) = phi(r, x[t_budget - 1]);
    let boundary = params.a_kappa - 1.0;
    value += s * boundary * bv;
    coef[t_budget - 1] += s * boundary * bd;
    if bdd != 0.0 {
        *acc.entry((t_budget - 1, t_budget - 1)).or_default() += s * boundary * bdd;
    }

    // Undetermined directions must carry no weight.
    for &c in &coef[k..] {
        if c.abs() > 1e-12 {
            return Err(Error::OutsideDeterminedSpan { overlap: c.abs() });
        }
    }
    if acc.keys().any(|&(rr, cc)| (rr >= k || cc >= k) && acc[&(rr, cc)].abs() > 1e-12) {
        return Err(Error::OutsideDeterminedSpan { overlap: f64::NAN });
    }
    acc.retain(|&(rr, cc), _| rr < k && cc < k);

    let mut gradient: Vec<f64> = w.iter().map(|&c| params.lambda * c).collect();
    for (i, v) in frame.vectors().iter().enumerate() {
        let c = coef[i];
        if c != 0.0 {
            for (g, &vi) in gradient.iter_mut().zip(v) {
                *g += c * vi;
            }
        }
    }

    let hessian = StructuredHessian::from_accumulated(
        params.d,
        params.lambda,
        acc,
        Some(frame.vectors()[..k].to_vec()),
    );
    Ok(OracleResponse { value, gradient, hessian })
}

/// The completed objective: full frame, with a cached high-accuracy numeric
/// minimizer.
#[derive(Debug, Clone)]
pub struct FlattenedObjective {
    pub params: FlattenedParams,
    pub frame: OrthonormalFrame,
    optimum: Vec<f64>,
    optimum_value: f64,
}

impl FlattenedObjective {
    pub fn new(params: FlattenedParams, frame: OrthonormalFrame) -> Result<Self> {
        if frame.len() != params.t_budget {
            return Err(Error::InvalidParam(format!(
                "complete frame required: {} of {} directions",
                frame.len(),
                params.t_budget
            )));
        }
        let optimum = minimize(&params, &frame)?;
        let mut obj = Self { params, frame, optimum: optimum.clone(), optimum_value: 0.0 };
        obj.optimum_value = eval_flattened(&obj.params, &obj.frame, &optimum)?.value;
        Ok(obj)
    }

    /// The unflattened optimum sum q^i v_i.
    pub fn anchor(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.params.d];
        let mut p = 1.0;
        for v in self.frame.vectors() {
            p *= self.params.q;
            for (ai, &vi) in a.iter_mut().zip(v) {
                *ai += p * vi;
            }
        }
        a
    }

    pub fn numeric_optimum(&self) -> &[f64] {
        &self.optimum
    }
}

impl FiniteSum for FlattenedObjective {
    fn n(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        self.params.d
    }

    fn component(&self, i: usize, w: &[f64]) -> Result<OracleResponse> {
        self.check_query(i, w)?;
        eval_flattened(&self.params, &self.frame, w)
    }

    fn objective(&self, w: &[f64]) -> Result<f64> {
        Ok(eval_flattened(&self.params, &self.frame, w)?.value)
    }

    fn optimum(&self) -> Vec<f64> {
        self.optimum.clone()
    }

    fn optimum_value(&self) -> f64 {
        self.optimum_value
    }
}

/// Accelerated descent to gradient norm <= 1e-12 * scale, warm-started at the
/// anchor. The objective is strongly convex and smooth, so a constant-
/// momentum schedule suffices.
fn minimize(params: &FlattenedParams, frame: &OrthonormalFrame) -> Result<Vec<f64>> {
    let d = params.d;
    let grad_at = |w: &[f64]| -> Result<Vec<f64>> { Ok(eval_flattened(params, frame, w)?.gradient) };
    let g0 = grad_at(&vec![0.0; d])?;
    let tol = 1e-12 * norm(&g0).max(1.0);
    let hard_tol = 1e-10 * norm(&g0).max(1.0);

    let sqrt_cond = (params.mu / params.lambda).sqrt();
    let beta = (sqrt_cond - 1.0) / (sqrt_cond + 1.0);
    let step = 1.0 / params.mu;

    let mut w = {
        // anchor = sum q^i v_i
        let mut a = vec![0.0; d];
        let mut p = 1.0;
        for v in frame.vectors() {
            p *= params.q;
            for (ai, &vi) in a.iter_mut().zip(v) {
                *ai += p * vi;
            }
        }
        a
    };
    let mut w_prev = w.clone();
    const MAX_ITERS: usize = 500_000;
    for it in 0..MAX_ITERS {
        let y: Vec<f64> = w
            .iter()
            .zip(&w_prev)
            .map(|(&a, &b)| a + beta * (a - b))
            .collect();
        let g = grad_at(&y)?;
        let gn = norm(&grad_at(&w)?);
        if gn <= tol {
            return Ok(w);
        }
        let next: Vec<f64> = y.iter().zip(&g).map(|(&a, &b)| a - step * b).collect();
        w_prev = w;
        w = next;
        if it == MAX_ITERS - 1 {
            let gn = norm(&grad_at(&w)?);
            if gn <= hard_tol {
                return Ok(w);
            }
            return Err(Error::MinimizationFailed { grad_norm: gn, iters: MAX_ITERS });
        }
    }
    unreachable!()
}

/// Anchor point, the analytic displacement bound sqrt(T mu r^2/(16 lambda)),
/// and the measured displacement of the numeric minimizer from the anchor.
#[derive(Debug, Clone)]
pub struct OptimumBracket {
    pub anchor: Vec<f64>,
    pub displacement_bound: f64,
    pub measured_displacement: f64,
}

pub fn flattened_optimum_bracket(objective: &FlattenedObjective) -> OptimumBracket {
    let p = &objective.params;
    let anchor = objective.anchor();
    let bound = (p.t_budget as f64 * p.mu * p.r * p.r / (16.0 * p.lambda)).sqrt();
    let diff: Vec<f64> = objective
        .numeric_optimum()
        .iter()
        .zip(&anchor)
        .map(|(&a, &b)| a - b)
        .collect();
    OptimumBracket { anchor, displacement_bound: bound, measured_displacement: norm(&diff) }
}

/// History visible to a deterministic algorithm: its own queries paired with
/// the oracle responses received so far.
pub type History = [(Vec<f64>, OracleResponse)];

/// Outcome of a resisting-oracle run.
#[derive(Debug, Clone)]
pub struct ResistOutcome {
    pub objective: FlattenedObjective,
    pub queries: Vec<Vec<f64>>,
    /// Suboptimality ratio of each query point against the completed F.
    pub ratios: Vec<f64>,
    /// <w_T, v_T>; zero by construction.
    pub final_inner: f64,
}

/// Runs the interleaved protocol against a deterministic algorithm: each
/// query point is answered with a frame extended just enough to fix the
/// response, the final hidden direction is chosen orthogonal to everything,
/// and all responses are re-checked against the completed objective.
pub fn resist<A>(algorithm: &mut A, params: FlattenedParams, seed: u64) -> Result<ResistOutcome>
where
    A: FnMut(&History) -> Vec<f64>,
{
    let t_budget = params.t_budget;
    let d = params.d;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut frame = OrthonormalFrame::new();
    let mut history: Vec<(Vec<f64>, OracleResponse)> = Vec::new();
    let mut queries: Vec<Vec<f64>> = Vec::new();

    for t in 1..=t_budget {
        let w = algorithm(&history);
        if w.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: w.len() });
        }
        if w.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteQuery { step: t });
        }
        queries.push(w.clone());
        frame.extend_orthogonal(&queries, &mut rng)?;
        if t < t_budget {
            let resp = eval_flattened(&params, &frame, &w)?;
            history.push((w, resp));
        }
    }

    let objective = FlattenedObjective::new(params, frame)?;

    // Every mid-protocol response must match the completed objective.
    for (w, resp) in &history {
        let full = eval_flattened(&objective.params, &objective.frame, w)?;
        let scale = resp.value.abs().max(1.0);
        if (full.value - resp.value).abs() > 1e-12 * scale {
            return Err(Error::MinimizationFailed { grad_norm: (full.value - resp.value).abs(), iters: 0 });
        }
        let gerr = resp
            .gradient
            .iter()
            .zip(&full.gradient)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if gerr > 1e-12 * norm(&resp.gradient).max(1.0) {
            return Err(Error::MinimizationFailed { grad_norm: gerr, iters: 0 });
        }
    }

    let ratios = queries
        .iter()
        .map(|w| crate::oracle::suboptimality_ratio(&objective, w))
        .collect::<Result<Vec<_>>>()?;
    let final_inner = dot(
        queries.last().expect("t_budget >= 2"),
        objective.frame.vectors().last().expect("complete frame"),
    );
    Ok(ResistOutcome { objective, queries, ratios, final_inner })
}

/// Plain gradient descent with step 1/mu, started at the origin.
pub fn gd_callback(mu: f64, d: usize) -> impl FnMut(&History) -> Vec<f64> {
    move |history: &History| match history.last() {
        None => vec![0.0; d],
        Some((w, resp)) => w
            .iter()
            .zip(&resp.gradient)
            .map(|(&wi, &gi)| wi - gi / mu)
            .collect(),
    }
}

/// Accelerated descent with the constant-momentum strongly convex schedule.
pub fn nesterov_callback(mu: f64, lambda: f64, d: usize) -> impl FnMut(&History) -> Vec<f64> {
    let sqrt_cond = (mu / lambda).sqrt();
    let beta = (sqrt_cond - 1.0) / (sqrt_cond + 1.0);
    let mut w_cur: Vec<f64> = vec![0.0; d];
    move |history: &History| match history.last() {
        None => vec![0.0; d],
        Some((y, resp)) => {
            let w_next: Vec<f64> = y
                .iter()
                .zip(&resp.gradient)
                .map(|(&yi, &gi)| yi - gi / mu)
                .collect();
            let w_old = std::mem::replace(&mut w_cur, w_next);
            w_cur
                .iter()
                .zip(&w_old)
                .map(|(&a, &b)| a + beta * (a - b))
                .collect()
        }
    }
}

/// Damped Newton using the returned structured Hessian (dense solve; the
/// protocol dimension 2T stays small).
pub fn damped_newton_callback(damping: f64, d: usize) -> impl FnMut(&History) -> Vec<f64> {
    move |history: &History| match history.last() {
        None => vec![0.0; d],
        Some((w, resp)) => {
            let h = resp.hessian.to_dense().expect("protocol dimension is small");
            let g = nalgebra::DVector::from_row_slice(&resp.gradient);
            let dir = h.lu().solve(&g).expect("Hessian is positive definite");
            w.iter().zip(dir.iter()).map(|(&wi, &di)| wi - damping * di).collect()
        }
    }
}

/// Never moves; the no-progress baseline.
pub fn always_zero_callback(d: usize) -> impl FnMut(&History) -> Vec<f64> {
    move |_: &History| vec![0.0; d]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::resisting_envelope;

    #[test]
    fn phi_hand_values() {
        let (v, d1, d2) = phi(1.0, 0.5);
        assert_eq!((v, d1, d2), (0.0, 0.0, 0.0));
        let (v, d1, d2) = phi(1.0, 1.5);
        assert!((v - 0.5).abs() < 1e-15);
        assert!((d1 - 2.0).abs() < 1e-15);
        assert_eq!(d2, 4.0);
        let (v, _, _) = phi(1.0, 3.0);
        assert!((v - 7.0).abs() < 1e-15);
        let (v, d1, d2) = phi(0.0, -1.25);
        assert_eq!((v, d1, d2), (1.5625, -2.5, 2.0));
    }

    #[test]
    fn phi_envelope_and_smoothness_bounds() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let r = rng.gen_range(0.0..2.0);
            let z = rng.gen_range(-5.0..5.0);
            let (v, _, d2) = phi(r, z);
            let gap = z * z - v;
            assert!(gap >= -1e-12 && gap <= 2.0 * r * r + 1e-12);
            assert!((0.0..=4.0).contains(&d2));
        }
    }

    #[test]
    fn phi_continuity_at_breakpoints() {
        let eps = 1e-7;
        for r in [0.3, 1.0, 2.5] {
            for bp in [r, 2.0 * r] {
                for sign in [-1.0, 1.0] {
                    // Across a 2*eps gap the value moves by ~2*eps*|phi'| and
                    // the derivative by ~2*eps*phi''; anything much larger is
                    // a genuine jump.
                    let (va, da, _) = phi(r, sign * (bp - eps));
                    let (vb, db, _) = phi(r, sign * (bp + eps));
                    assert!((va - vb).abs() < 1e-5, "value jump at {bp}");
                    assert!((da - db).abs() < 1e-5, "derivative jump at {bp}");
                }
            }
        }
    }

    #[test]
    fn chosen_radius_is_strictly_feasible() {
        for t in [2usize, 4, 8, 16] {
            let r = choose_radius(32.0, 1.0, t).unwrap();
            let p = FlattenedParams::new(32.0, 1.0, t, r).unwrap();
            let tf = t as f64;
            assert!(tf * 32.0 * r * r / 8.0 < 1.0);
            assert!((tf * 32.0 * r * r / 16.0).sqrt() < p.q.powi(t as i32) / 2.0);
        }
        // Doubling T weakly decreases r.
        let mut prev = f64::INFINITY;
        for t in [2usize, 4, 8, 16, 32] {
            let r = choose_radius(32.0, 1.0, t).unwrap();
            assert!(r <= prev);
            prev = r;
        }
        // Closed-form cap from the second constraint at T=4, q=1/3.
        let r = choose_radius(32.0, 1.0, 4).unwrap();
        let q: f64 = 1.0 / 3.0;
        let cap = (16.0 * 1.0 * (q.powi(4) / 2.0) * (q.powi(4) / 2.0) / (4.0 * 32.0)).sqrt();
        assert!(r <= cap);
        assert!(choose_radius(8.0, 1.0, 4).is_err());
    }

    fn build_run(t: usize, seed: u64) -> ResistOutcome {
        let params = FlattenedParams::with_chosen_radius(32.0, 1.0, t).unwrap();
        let mut algo = gd_callback(32.0, params.d);
        resist(&mut algo, params, seed).unwrap()
    }

    #[test]
    fn gradient_at_zero_points_along_first_direction() {
        let run = build_run(4, 1);
        let obj = &run.objective;
        let resp = eval_flattened(&obj.params, &obj.frame, &vec![0.0; obj.params.d]).unwrap();
        assert_eq!(resp.value, 0.0);
        let s = obj.params.lambda * (obj.params.kappa - 1.0) / 8.0;
        let v1 = &obj.frame.vectors()[0];
        for (g, &v) in resp.gradient.iter().zip(v1) {
            assert!((g + 2.0 * s * v).abs() < 1e-12);
        }
    }

    #[test]
    fn final_query_orthogonal_to_last_direction() {
        for seed in 0..3 {
            let run = build_run(4, seed);
            assert!(run.final_inner.abs() <= 1e-10);
            assert!(run.objective.frame.check_orthonormal());
        }
    }

    #[test]
    fn no_progress_baseline_ratio_is_one() {
        let params = FlattenedParams::with_chosen_radius(32.0, 1.0, 4).unwrap();
        let mut algo = always_zero_callback(params.d);
        let run = resist(&mut algo, params, 3).unwrap();
        for r in &run.ratios {
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn final_ratio_dominates_envelope() {
        for t in [4usize, 8] {
            let params = FlattenedParams::with_chosen_radius(32.0, 1.0, t).unwrap();
            let mut algo = nesterov_callback(32.0, 1.0, params.d);
            let run = resist(&mut algo, params, 5).unwrap();
            let env = resisting_envelope(32.0, 1.0, t as u64).unwrap();
            assert!(run.ratios.last().unwrap() >= &env, "T={t}");
        }
    }

    #[test]
    fn partial_frame_matches_random_completions() {
        let params = FlattenedParams::with_chosen_radius(32.0, 1.0, 5).unwrap();
        let d = params.d;
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        // Build a partial frame of 2 directions orthogonal to a test point.
        let mut w: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut frame = OrthonormalFrame::new();
        frame.extend_orthogonal(std::slice::from_ref(&w), &mut rng).unwrap();
        frame.extend_orthogonal(std::slice::from_ref(&w), &mut rng).unwrap();
        // Make w exactly representable in the determined span complement.
        for v in frame.vectors() {
            let p = dot(v, &w);
            for (x, y) in w.iter_mut().zip(v) {
                *x -= p * y;
            }
        }
        let partial = eval_flattened(&params, &frame, &w).unwrap();
        for cseed in [100u64, 200] {
            let mut completion = frame.clone();
            let mut crng = ChaCha12Rng::seed_from_u64(cseed);
            // Legal completions stay orthogonal to the query.
            let constraints = vec![w.clone()];
            while completion.len() < params.t_budget {
                completion.extend_orthogonal(&constraints, &mut crng).unwrap();
            }
            let full = eval_flattened(&params, &completion, &w).unwrap();
            assert!((full.value - partial.value).abs() < 1e-12 * partial.value.abs().max(1.0));
            for (a, b) in partial.gradient.iter().zip(&full.gradient) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_outside_span_is_rejected() {
        let params = FlattenedParams::with_chosen_radius(32.0, 1.0, 4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut frame = OrthonormalFrame::new();
        let probe = vec![1.0; params.d];
        frame.extend_orthogonal(std::slice::from_ref(&probe), &mut rng).unwrap();
        // A point with overlap on the last (only) determined direction.
        let w = frame.vectors()[0].clone();
        assert!(matches!(
            eval_flattened(&params, &frame, &w),
            Err(Error::OutsideDeterminedSpan { .. })
        ));
    }

    #[test]
    fn unflattened_full_frame_matches_chain_formula() {
        // r = 0 and the standard basis as frame: F reduces to the explicit
        // tridiagonal quadratic on the first T coordinates.
        let t = 4;
        let params = FlattenedParams::new(32.0, 1.0, t, 0.0).unwrap();
        let d = params.d;
        let mut basis = Vec::new();
        for i in 0..t {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            basis.push(e);
        }
        let frame = OrthonormalFrame { vectors: basis };
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..20 {
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let resp = eval_flattened(&params, &frame, &w).unwrap();
            let s = params.lambda * (params.kappa - 1.0) / 8.0;
            let mut expected = s * (w[0] * w[0] - 2.0 * w[0]);
            for i in 0..t - 1 {
                expected += s * (w[i] - w[i + 1]) * (w[i] - w[i + 1]);
            }
            expected += s * (params.a_kappa - 1.0) * w[t - 1] * w[t - 1];
            expected += 0.5 * params.lambda * w.iter().map(|&c| c * c).sum::<f64>();
            assert!((resp.value - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn zero_radius_bracket_collapses() {
        let t = 4;
        let params = FlattenedParams::new(32.0, 1.0, t, 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut frame = OrthonormalFrame::new();
        let probe = vec![1.0; params.d];
        frame.extend_orthogonal(std::slice::from_ref(&probe), &mut rng).unwrap();
        for _ in 1..t {
            frame.extend_orthogonal(&[], &mut rng).unwrap();
        }
        let obj = FlattenedObjective::new(params, frame).unwrap();
        let bracket = flattened_optimum_bracket(&obj);
        assert_eq!(bracket.displacement_bound, 0.0);
        assert!(bracket.measured_displacement < 1e-9);
    }
}
