//! The randomized quadratic-chain finite sum, its closed-form optimum, and
//! the sign-flip instance.
//!
//! Each coupling block (w_l - w_{l+1})^2 is owned by a single component
//! f_{j_l}, with the owners j_1..j_{d-1} drawn i.i.d. uniform from {1..n}.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bounds::{ProblemParams, RateConstants};
use crate::error::{Error, Result};
use crate::oracle::{FiniteSum, OracleResponse, StructuredHessian};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainInstance {
    pub params: ProblemParams,
    pub rates: RateConstants,
    /// Block owners j_1..j_{d-1}, 1-based values in [1, n].
    pub owners: Vec<usize>,
    pub seed: u64,
}

/// Draws block owners i.i.d. uniform on {1..n}; deterministic given the seed.
pub fn sample_chain(params: &ProblemParams, seed: u64) -> Result<ChainInstance> {
    if params.d < 2 {
        return Err(Error::InvalidParam("chain sampling requires d >= 2".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let owners = (0..params.d - 1).map(|_| rng.gen_range(1..=params.n)).collect();
    ChainInstance::with_owners(*params, owners, seed)
}

impl ChainInstance {
    /// mu == lambda is admitted here (kappa = 1, q = 0); all formulas
    /// specialize continuously.
    pub fn with_owners(params: ProblemParams, owners: Vec<usize>, seed: u64) -> Result<Self> {
        if params.lambda <= 0.0 || params.mu < params.lambda {
            return Err(Error::InvalidParam(format!(
                "require mu >= lambda > 0, got mu={}, lambda={}",
                params.mu, params.lambda
            )));
        }
        if owners.len() + 1 != params.d {
            return Err(Error::InvalidParam(format!(
                "owners length {} does not match d = {}",
                owners.len(),
                params.d
            )));
        }
        if let Some(&j) = owners.iter().find(|&&j| j < 1 || j > params.n) {
            return Err(Error::InvalidParam(format!("owner {j} outside [1, {}]", params.n)));
        }
        let rates = RateConstants::for_finite_sum(params.mu, params.lambda, params.n)?;
        Ok(Self { params, rates, owners, seed })
    }

    fn coeff(&self) -> f64 {
        (self.params.mu - self.params.lambda) / 8.0
    }

    /// F(w) with the coupling sum shared 1/n across all components.
    pub fn average_objective(&self, w: &[f64]) -> Result<f64> {
        let d = self.params.d;
        if w.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: w.len() });
        }
        let c = self.coeff() / self.params.n as f64;
        // The -2 w_1 linear coefficient is what makes (q, ..., q^d) the exact
        // stationary point of the tridiagonal system.
        let mut bracket =
            w[0] * w[0] + (self.rates.a_kappa - 1.0) * w[d - 1] * w[d - 1] - 2.0 * w[0];
        for l in 0..d - 1 {
            let diff = w[l] - w[l + 1];
            bracket += diff * diff;
        }
        let sq: f64 = w.iter().map(|&x| x * x).sum();
        Ok(c * bracket + 0.5 * self.params.lambda * sq)
    }

    /// The minimizer (q, q^2, ..., q^d).
    pub fn closed_form_optimum(&self) -> Vec<f64> {
        let q = self.rates.q;
        let mut v = Vec::with_capacity(self.params.d);
        let mut p = 1.0;
        for _ in 0..self.params.d {
            p *= q;
            v.push(p);
        }
        v
    }

    /// Independent optimum oracle: solves the stationarity system
    /// grad F(w) = 0 (tridiagonal plus diagonal) by direct elimination.
    pub fn tridiagonal_solve_optimum(&self) -> Result<Vec<f64>> {
        let d = self.params.d;
        if d > 100_000 {
            return Err(Error::BudgetExceeded("tridiagonal solve capped at d <= 1e5".into()));
        }
        let c = self.coeff() / self.params.n as f64;
        if c == 0.0 {
            // kappa = 1: grad F = lambda w, minimized at the origin.
            return Ok(vec![0.0; d]);
        }
        // grad F = 2c*A*w - 2c*e1 + lambda*w, with A the symmetric tridiagonal
        // (2, -1) matrix whose last diagonal entry is a_kappa.
        let lambda = self.params.lambda;
        let mut diag: Vec<f64> = vec![4.0 * c + lambda; d];
        diag[d - 1] = 2.0 * c * self.rates.a_kappa + lambda;
        let off = -2.0 * c;
        let mut rhs = vec![0.0; d];
        rhs[0] = 2.0 * c;
        // Thomas elimination.
        for i in 1..d {
            let m = off / diag[i - 1];
            diag[i] -= m * off;
            rhs[i] -= m * rhs[i - 1];
        }
        let mut w = vec![0.0; d];
        w[d - 1] = rhs[d - 1] / diag[d - 1];
        for i in (0..d - 1).rev() {
            w[i] = (rhs[i] - off * w[i + 1]) / diag[i];
        }
        Ok(w)
    }

    /// Gradient of the full objective F at w.
    pub fn full_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let d = self.params.d;
        if w.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: w.len() });
        }
        let c = self.coeff() / self.params.n as f64;
        let lambda = self.params.lambda;
        let mut g: Vec<f64> = w.iter().map(|&x| lambda * x).collect();
        g[0] += 2.0 * c * (w[0] - 1.0);
        g[d - 1] += 2.0 * c * (self.rates.a_kappa - 1.0) * w[d - 1];
        for l in 0..d - 1 {
            let diff = 2.0 * c * (w[l] - w[l + 1]);
            g[l] += diff;
            g[l + 1] -= diff;
        }
        Ok(g)
    }

    /// Hessian of the full objective F (constant in w).
    pub fn full_hessian(&self) -> StructuredHessian {
        let d = self.params.d;
        let c = self.coeff() / self.params.n as f64;
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        *acc.entry((0, 0)).or_default() += 2.0 * c;
        *acc.entry((d - 1, d - 1)).or_default() += 2.0 * c * (self.rates.a_kappa - 1.0);
        for l in 0..d - 1 {
            *acc.entry((l, l)).or_default() += 2.0 * c;
            *acc.entry((l + 1, l + 1)).or_default() += 2.0 * c;
            *acc.entry((l, l + 1)).or_default() += -2.0 * c;
            *acc.entry((l + 1, l)).or_default() += -2.0 * c;
        }
        StructuredHessian::from_accumulated(d, self.params.lambda, acc, None)
    }

    /// Flat text serialization so experiments are replayable without
    /// re-sampling.
    pub fn serialize(&self) -> String {
        let owners: Vec<String> = self.owners.iter().map(|j| j.to_string()).collect();
        format!(
            "mu={}\nlambda={}\nn={}\nd={}\nseed={}\nowners={}\n",
            self.params.mu,
            self.params.lambda,
            self.params.n,
            self.params.d,
            self.seed,
            owners.join(",")
        )
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("missing '=' in line {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            fields.get(k).copied().ok_or_else(|| Error::Parse(format!("missing field {k}")))
        };
        let mu: f64 = get("mu")?.parse().map_err(|e| Error::Parse(format!("mu: {e}")))?;
        let lambda: f64 =
            get("lambda")?.parse().map_err(|e| Error::Parse(format!("lambda: {e}")))?;
        let n: usize = get("n")?.parse().map_err(|e| Error::Parse(format!("n: {e}")))?;
        let d: usize = get("d")?.parse().map_err(|e| Error::Parse(format!("d: {e}")))?;
        let seed: u64 = get("seed")?.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?;
        let owners = get("owners")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("owners: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        // epsilon is not part of the replay format; evaluation never reads it.
        let params = ProblemParams { mu, lambda, n, d, epsilon: 0.5 };
        Self::with_owners(params, owners, seed)
    }
}

impl FiniteSum for ChainInstance {
    fn n(&self) -> usize {
        self.params.n
    }

    fn dim(&self) -> usize {
        self.params.d
    }

    fn component(&self, i: usize, w: &[f64]) -> Result<OracleResponse> {
        self.check_query(i, w)?;
        let d = self.params.d;
        let n = self.params.n as f64;
        let c = self.coeff();
        let lambda = self.params.lambda;
        let a_kappa = self.rates.a_kappa;

        let shared = (w[0] * w[0] + (a_kappa - 1.0) * w[d - 1] * w[d - 1] - 2.0 * w[0]) / n;
        let mut bracket = shared;
        let sq: f64 = w.iter().map(|&x| x * x).sum();

        let mut g: Vec<f64> = w.iter().map(|&x| lambda * x).collect();
        g[0] += 2.0 * c / n * (w[0] - 1.0);
        g[d - 1] += 2.0 * c / n * (a_kappa - 1.0) * w[d - 1];

        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        *acc.entry((0, 0)).or_default() += 2.0 * c / n;
        *acc.entry((d - 1, d - 1)).or_default() += 2.0 * c / n * (a_kappa - 1.0);

        for l in 0..d - 1 {
            if self.owners[l] != i {
                continue;
            }
            let diff = w[l] - w[l + 1];
            bracket += diff * diff;
            g[l] += 2.0 * c * diff;
            g[l + 1] -= 2.0 * c * diff;
            *acc.entry((l, l)).or_default() += 2.0 * c;
            *acc.entry((l + 1, l + 1)).or_default() += 2.0 * c;
            *acc.entry((l, l + 1)).or_default() += -2.0 * c;
            *acc.entry((l + 1, l)).or_default() += -2.0 * c;
        }

        Ok(OracleResponse {
            value: c * bracket + 0.5 * lambda * sq,
            gradient: g,
            hessian: StructuredHessian::from_accumulated(d, lambda, acc, None),
        })
    }

    fn objective(&self, w: &[f64]) -> Result<f64> {
        self.average_objective(w)
    }

    fn optimum(&self) -> Vec<f64> {
        self.closed_form_optimum()
    }

    fn optimum_value(&self) -> f64 {
        self.average_objective(&self.closed_form_optimum())
            .expect("optimum has the instance dimension")
    }
}

/// The Omega(n) instance: f_i(w) = -delta_i w_1 + (lambda/2)||w||^2.
#[derive(Debug, Clone, PartialEq)]
pub struct SignFlipInstance {
    pub lambda: f64,
    pub n: usize,
    pub d: usize,
    /// Signs delta_i in {-1, +1}.
    pub signs: Vec<i8>,
    pub seed: u64,
}

pub fn sample_signflip(lambda: f64, n: usize, d: usize, seed: u64) -> Result<SignFlipInstance> {
    if lambda <= 0.0 || n < 1 || d < 1 {
        return Err(Error::InvalidParam("require lambda > 0, n >= 1, d >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let signs = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
    Ok(SignFlipInstance { lambda, n, d, signs, seed })
}

impl SignFlipInstance {
    pub fn with_signs(lambda: f64, d: usize, signs: Vec<i8>, seed: u64) -> Result<Self> {
        if lambda <= 0.0 || signs.is_empty() || d < 1 {
            return Err(Error::InvalidParam("require lambda > 0, n >= 1, d >= 1".into()));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParam("signs must be +1 or -1".into()));
        }
        Ok(Self { lambda, n: signs.len(), d, signs, seed })
    }

    fn mean_sign(&self) -> f64 {
        self.signs.iter().map(|&s| s as f64).sum::<f64>() / self.n as f64
    }
}

impl FiniteSum for SignFlipInstance {
    fn n(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn component(&self, i: usize, w: &[f64]) -> Result<OracleResponse> {
        self.check_query(i, w)?;
        let delta = self.signs[i - 1] as f64;
        let sq: f64 = w.iter().map(|&x| x * x).sum();
        let mut g: Vec<f64> = w.iter().map(|&x| self.lambda * x).collect();
        g[0] -= delta;
        Ok(OracleResponse {
            value: -delta * w[0] + 0.5 * self.lambda * sq,
            gradient: g,
            hessian: StructuredHessian::shift_only(self.d, self.lambda),
        })
    }

    fn objective(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: w.len() });
        }
        let sq: f64 = w.iter().map(|&x| x * x).sum();
        Ok(-self.mean_sign() * w[0] + 0.5 * self.lambda * sq)
    }

    /// ((1/(n lambda)) sum delta_i) e_1.
    fn optimum(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.d];
        v[0] = self.mean_sign() / self.lambda;
        v
    }

    fn optimum_value(&self) -> f64 {
        let m = self.mean_sign();
        -m * m / (2.0 * self.lambda)
    }
}
