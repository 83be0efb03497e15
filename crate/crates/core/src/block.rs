//! Block-diagonal composition embedding every owner tuple's chain instance at
//! once, so that adaptive index schedules can be audited against all
//! n^(d-1) sub-problems simultaneously. Deliberately tiny-scale: D = n^(d-1) d
//! is hard-capped and every evaluation streams over tuples.

use std::collections::BTreeMap;

use crate::chain::ChainInstance;
use crate::error::{Error, Result};
use crate::oracle::{FiniteSum, OracleResponse, StructuredHessian};
use crate::ProblemParams;

pub const MAX_BLOCK_DIM: usize = 2000;

/// Mixed-radix rank of a 1-based owner tuple, j_1 most significant.
pub fn tuple_rank(tuple: &[usize], n: usize) -> Result<usize> {
    let mut rank = 0usize;
    for &j in tuple {
        if j < 1 || j > n {
            return Err(Error::IndexOutOfRange { index: j, n });
        }
        rank = rank * n + (j - 1);
    }
    Ok(rank)
}

/// Inverse of [`tuple_rank`]: the rank-th tuple in [1,n]^(d-1).
pub fn rank_tuple(rank: usize, n: usize, d: usize) -> Result<Vec<usize>> {
    let count = n.checked_pow((d - 1) as u32).ok_or_else(|| {
        Error::InvalidParam(format!("n^(d-1) overflows for n={n}, d={d}"))
    })?;
    if rank >= count {
        return Err(Error::IndexOutOfRange { index: rank, n: count });
    }
    let mut tuple = vec![1usize; d - 1];
    let mut r = rank;
    for slot in tuple.iter_mut().rev() {
        *slot = r % n + 1;
        r /= n;
    }
    Ok(tuple)
}

/// All n^(d-1) chain sub-problems side by side on R^D, D = n^(d-1) d. The
/// component functions are f_i(u) = sum over tuples of the tuple's chain
/// f_i on that block's coordinates.
#[derive(Debug, Clone)]
pub struct BlockInstance {
    pub params: ProblemParams,
    blocks: Vec<ChainInstance>,
    total_dim: usize,
}

impl BlockInstance {
    pub fn new(params: ProblemParams) -> Result<Self> {
        let (n, d) = (params.n, params.d);
        if d < 2 {
            return Err(Error::InvalidParam("require d >= 2".into()));
        }
        let count = n
            .checked_pow((d - 1) as u32)
            .ok_or_else(|| Error::InvalidParam(format!("n^(d-1) overflows for n={n}, d={d}")))?;
        let total_dim = count
            .checked_mul(d)
            .filter(|&total| total <= MAX_BLOCK_DIM)
            .ok_or_else(|| {
                Error::BudgetExceeded(format!(
                    "block dimension n^(d-1)*d exceeds cap {MAX_BLOCK_DIM} for n={n}, d={d}"
                ))
            })?;
        let blocks = (0..count)
            .map(|rank| {
                let owners = rank_tuple(rank, n, d)?;
                ChainInstance::with_owners(params, owners, rank as u64)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { params, blocks, total_dim })
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[ChainInstance] {
        &self.blocks
    }

    /// u* tiles the chain closed-form optimum across every block.
    pub fn block_optimum(&self) -> Vec<f64> {
        let w_star = self.blocks[0].closed_form_optimum();
        let mut u = Vec::with_capacity(self.total_dim);
        for _ in 0..self.blocks.len() {
            u.extend_from_slice(&w_star);
        }
        u
    }

    /// Gradient of the summed objective Phi(u) = sum over blocks of F.
    pub fn full_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.total_dim {
            return Err(Error::DimensionMismatch { expected: self.total_dim, got: u.len() });
        }
        let d = self.params.d;
        let mut g = Vec::with_capacity(self.total_dim);
        for (rank, block) in self.blocks.iter().enumerate() {
            g.extend(block.full_gradient(&u[rank * d..(rank + 1) * d])?);
        }
        Ok(g)
    }

    /// Per block, the largest 1-based coordinate index carrying weight
    /// above 1e-12, or 0 for an untouched block.
    pub fn per_block_heads(&self, u: &[f64]) -> Result<Vec<usize>> {
        if u.len() != self.total_dim {
            return Err(Error::DimensionMismatch { expected: self.total_dim, got: u.len() });
        }
        let d = self.params.d;
        Ok((0..self.blocks.len())
            .map(|rank| {
                u[rank * d..(rank + 1) * d]
                    .iter()
                    .rposition(|&x| x.abs() > 1e-12)
                    .map_or(0, |p| p + 1)
            })
            .collect())
    }
}

impl FiniteSum for BlockInstance {
    fn n(&self) -> usize {
        self.params.n
    }

    fn dim(&self) -> usize {
        self.total_dim
    }

    fn component(&self, i: usize, u: &[f64]) -> Result<OracleResponse> {
        self.check_query(i, u)?;
        let d = self.params.d;
        let mut value = 0.0;
        let mut gradient = Vec::with_capacity(self.total_dim);
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (rank, block) in self.blocks.iter().enumerate() {
            let resp = block.component(i, &u[rank * d..(rank + 1) * d])?;
            value += resp.value;
            gradient.extend(resp.gradient);
            let off = rank * d;
            for (r, c, v) in resp.hessian.sparse_terms {
                *acc.entry((off + r, off + c)).or_default() += v;
            }
        }
        Ok(OracleResponse {
            value,
            gradient,
            hessian: StructuredHessian::from_accumulated(
                self.total_dim,
                self.params.lambda,
                acc,
                None,
            ),
        })
    }

    fn objective(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.total_dim {
            return Err(Error::DimensionMismatch { expected: self.total_dim, got: u.len() });
        }
        let d = self.params.d;
        let mut total = 0.0;
        for (rank, block) in self.blocks.iter().enumerate() {
            total += block.average_objective(&u[rank * d..(rank + 1) * d])?;
        }
        Ok(total)
    }

    fn optimum(&self) -> Vec<f64> {
        self.block_optimum()
    }

    fn optimum_value(&self) -> f64 {
        // F* is owner-independent, so Phi* is just n^(d-1) copies of it.
        self.blocks.len() as f64 * self.blocks[0].optimum_value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn params(mu: f64, lambda: f64, n: usize, d: usize) -> ProblemParams {
        ProblemParams { mu, lambda, n, d, epsilon: 0.5 }
    }

    #[test]
    fn rank_hand_values() {
        assert_eq!(tuple_rank(&[1, 1, 1], 4).unwrap(), 0);
        assert_eq!(tuple_rank(&[1, 2], 2).unwrap(), 1);
        assert_eq!(tuple_rank(&[2, 1], 2).unwrap(), 2);
        assert_eq!(rank_tuple(3, 2, 3).unwrap(), vec![2, 2]);
        assert!(tuple_rank(&[0, 1], 2).is_err());
        assert!(tuple_rank(&[3, 1], 2).is_err());
        assert!(rank_tuple(4, 2, 3).is_err());
    }

    #[test]
    fn rank_bijection_exhaustive() {
        let (n, d) = (3usize, 3usize);
        let count = n.pow((d - 1) as u32);
        let mut seen = vec![false; count];
        for rank in 0..count {
            let tuple = rank_tuple(rank, n, d).unwrap();
            assert_eq!(tuple.len(), d - 1);
            let back = tuple_rank(&tuple, n).unwrap();
            assert_eq!(back, rank);
            assert!(!seen[rank]);
            seen[rank] = true;
        }
    }

    #[test]
    fn dimension_cap_enforced() {
        assert!(BlockInstance::new(params(9.0, 1.0, 2, 12)).is_err());
        let inst = BlockInstance::new(params(9.0, 1.0, 2, 3)).unwrap();
        assert_eq!(inst.dim(), 12);
        assert_eq!(inst.block_count(), 4);
    }

    #[test]
    fn component_value_decomposes_over_blocks() {
        let inst = BlockInstance::new(params(9.0, 1.0, 2, 3)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let u: Vec<f64> = (0..inst.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 1..=2 {
            let resp = inst.component(i, &u).unwrap();
            let mut total = 0.0;
            for (rank, block) in inst.blocks().iter().enumerate() {
                total += block.component(i, &u[rank * 3..(rank + 1) * 3]).unwrap().value;
            }
            assert!((resp.value - total).abs() < 1e-12 * total.abs().max(1.0));
            assert!(resp.hessian.is_symmetric());
        }
        // Average of components equals the summed objective.
        let avg = (1..=2)
            .map(|i| inst.component(i, &u).unwrap().value)
            .sum::<f64>()
            / 2.0;
        assert!((avg - inst.objective(&u).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gradient_at_zero_is_blockwise_chain_gradient() {
        let inst = BlockInstance::new(params(9.0, 1.0, 2, 3)).unwrap();
        let zero = vec![0.0; inst.dim()];
        let resp = inst.component(1, &zero).unwrap();
        for (rank, block) in inst.blocks().iter().enumerate() {
            let sub = &resp.gradient[rank * 3..(rank + 1) * 3];
            let expected = block.component(1, &[0.0; 3]).unwrap().gradient;
            assert_eq!(sub, expected.as_slice());
        }
    }

    #[test]
    fn component_spectrum_within_mu_band() {
        let inst = BlockInstance::new(params(9.0, 1.0, 2, 3)).unwrap();
        for i in 1..=2 {
            let h = inst.component(i, &vec![0.0; 12]).unwrap().hessian;
            let dense = h.to_dense().unwrap();
            let eig = nalgebra::SymmetricEigen::new(dense);
            for ev in eig.eigenvalues.iter() {
                assert!(*ev >= 1.0 - 1e-8 && *ev <= 9.0 + 1e-8, "eigenvalue {ev}");
            }
        }
    }

    #[test]
    fn optimum_tiles_chain_and_is_stationary() {
        let inst = BlockInstance::new(params(9.0, 1.0, 2, 4)).unwrap();
        let u = inst.block_optimum();
        let w = inst.blocks()[0].closed_form_optimum();
        assert_eq!(&u[..4], w.as_slice());
        assert_eq!(&u[4..8], w.as_slice());

        let nu2: f64 = u.iter().map(|&x| x * x).sum();
        let nw2: f64 = w.iter().map(|&x| x * x).sum();
        assert!((nu2 - inst.block_count() as f64 * nw2).abs() < 1e-12);

        let g = inst.full_gradient(&u).unwrap();
        assert!(norm(&g) <= 1e-9);

        // Optimum value agrees with direct evaluation.
        assert!((inst.objective(&u).unwrap() - inst.optimum_value()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_kappa_optimum_is_zero() {
        let inst = BlockInstance::new(params(2.0, 2.0, 2, 3)).unwrap();
        assert!(inst.block_optimum().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn heads_hand_values() {
        let inst = BlockInstance::new(params(9.0, 1.0, 2, 3)).unwrap();
        assert_eq!(inst.per_block_heads(&vec![0.0; 12]).unwrap(), vec![0; 4]);
        assert_eq!(inst.per_block_heads(&inst.block_optimum()).unwrap(), vec![3; 4]);
        let mut u = vec![0.0; 12];
        u[1] = 0.5; // block 0, coordinate 2
        u[6] = 1e-13; // block 2: below threshold
        u[9] = -2.0; // block 3, coordinate 1
        assert_eq!(inst.per_block_heads(&u).unwrap(), vec![2, 0, 0, 1]);
    }

    #[test]
    fn ratio_is_defined_and_clamped() {
        let inst = BlockInstance::new(params(9.0, 1.0, 2, 3)).unwrap();
        let r0 = crate::oracle::suboptimality_ratio(&inst, &vec![0.0; 12]).unwrap();
        assert!((r0 - 1.0).abs() < 1e-12);
        let rstar = crate::oracle::suboptimality_ratio(&inst, &inst.block_optimum()).unwrap();
        assert!(rstar.abs() < 1e-12);
    }
}
