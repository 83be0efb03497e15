//! Counted second-order oracle over a finite sum: structured Hessian
//! representation, the call ledger, and uncounted full-objective evaluation.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Hessian returned structurally: a diagonal shift plus a symmetric sparse
/// remainder, optionally expressed in an orthonormal frame. Chain Hessians
/// are tridiagonal-plus-diagonal, so this stays cheap up to d ~ 1e5; a dense
/// materialization exists only for small test paths.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredHessian {
    pub dim: usize,
    /// The lambda*I part.
    pub diagonal_shift: f64,
    /// Symmetric sparse remainder, 0-based (row, col, value). When `basis`
    /// is present, row/col index into the frame rather than coordinates.
    pub sparse_terms: Vec<(usize, usize, f64)>,
    /// Orthonormal frame for instances expressed in a rotated basis.
    pub basis: Option<Vec<Vec<f64>>>,
}

impl StructuredHessian {
    pub fn shift_only(dim: usize, shift: f64) -> Self {
        Self { dim, diagonal_shift: shift, sparse_terms: Vec::new(), basis: None }
    }

    /// Builds sorted, coalesced sparse terms from an accumulation map.
    pub fn from_accumulated(
        dim: usize,
        shift: f64,
        acc: BTreeMap<(usize, usize), f64>,
        basis: Option<Vec<Vec<f64>>>,
    ) -> Self {
        let sparse_terms = acc
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((r, c), v)| (r, c, v))
            .collect();
        Self { dim, diagonal_shift: shift, sparse_terms, basis }
    }

    /// Matrix-vector product against the full (shift + remainder) operator.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut out: Vec<f64> = x.iter().map(|&v| self.diagonal_shift * v).collect();
        match &self.basis {
            None => {
                for &(r, c, v) in &self.sparse_terms {
                    out[r] += v * x[c];
                }
            }
            Some(frame) => {
                // coords[k] = <v_k, x>; out += sum v * frame[r] * coords[c]
                let coords: Vec<f64> = frame.iter().map(|vk| dot(vk, x)).collect();
                for &(r, c, v) in &self.sparse_terms {
                    let scale = v * coords[c];
                    for (o, &fr) in out.iter_mut().zip(frame[r].iter()) {
                        *o += scale * fr;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Dense materialization; intended for small-dimension test paths only.
    pub fn to_dense(&self) -> Result<nalgebra::DMatrix<f64>> {
        if self.dim > 2000 {
            return Err(Error::BudgetExceeded(format!(
                "dense materialization capped at d <= 2000, got {}",
                self.dim
            )));
        }
        let mut m = nalgebra::DMatrix::<f64>::identity(self.dim, self.dim) * self.diagonal_shift;
        match &self.basis {
            None => {
                for &(r, c, v) in &self.sparse_terms {
                    m[(r, c)] += v;
                }
            }
            Some(frame) => {
                for &(r, c, v) in &self.sparse_terms {
                    for a in 0..self.dim {
                        for b in 0..self.dim {
                            m[(a, b)] += v * frame[r][a] * frame[c][b];
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// Every (r,c,v) must have a matching (c,r,v) or lie on the diagonal.
    pub fn is_symmetric(&self) -> bool {
        let map: BTreeMap<(usize, usize), f64> =
            self.sparse_terms.iter().map(|&(r, c, v)| ((r, c), v)).collect();
        self.sparse_terms
            .iter()
            .all(|&(r, c, v)| r == c || map.get(&(c, r)).is_some_and(|&w| w == v))
    }
}

/// The (value, gradient, Hessian) triple returned per oracle query.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: StructuredHessian,
}

/// A finite-sum instance F = (1/n) sum f_i with a known exact optimum.
pub trait FiniteSum: Sync {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    /// Exact value/gradient/Hessian of f_i at w; `i` is 1-based.
    fn component(&self, i: usize, w: &[f64]) -> Result<OracleResponse>;
    /// Full objective F(w); uncounted, for measurement only.
    fn objective(&self, w: &[f64]) -> Result<f64>;
    fn optimum(&self) -> Vec<f64>;
    fn optimum_value(&self) -> f64;
    fn check_query(&self, i: usize, w: &[f64]) -> Result<()> {
        if i < 1 || i > self.n() {
            return Err(Error::IndexOutOfRange { index: i, n: self.n() });
        }
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: w.len() });
        }
        Ok(())
    }
}

/// One recorded oracle call. The query point is kept only when the ledger was
/// opened with point recording (audits); the hash is always kept.
#[derive(Debug, Clone)]
pub struct LedgerEntry {
    /// 1-based consecutive step.
    pub step: u64,
    /// 1-based component index.
    pub index: usize,
    /// FNV-1a (64-bit) of the little-endian byte image of the point.
    pub point_hash: u64,
    pub point: Option<Vec<f64>>,
}

/// Append-only record of (step, index, query point) for counting and audits.
#[derive(Debug, Clone)]
pub struct CallLedger {
    entries: Vec<LedgerEntry>,
    per_index_counts: Vec<u64>,
    total: u64,
    record_points: bool,
}

impl CallLedger {
    pub fn new(n: usize) -> Self {
        Self { entries: Vec::new(), per_index_counts: vec![0; n], total: 0, record_points: false }
    }

    /// Ledger that keeps full query points, for support audits.
    pub fn with_points(n: usize) -> Self {
        Self { record_points: true, ..Self::new(n) }
    }

    pub fn record(&mut self, index: usize, point: &[f64]) {
        self.total += 1;
        self.per_index_counts[index - 1] += 1;
        self.entries.push(LedgerEntry {
            step: self.total,
            index,
            point_hash: fnv1a64_point(point),
            point: self.record_points.then(|| point.to_vec()),
        });
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn per_index_counts(&self) -> &[u64] {
        &self.per_index_counts
    }

    pub fn index_sequence(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    /// CSV export with header `t,index,point_hash`.
    pub fn export_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,index,point_hash")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.step, e.index, e.point_hash)?;
        }
        Ok(())
    }
}

/// 64-bit FNV-1a over the little-endian byte image of the point.
pub fn fnv1a64_point(point: &[f64]) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    for v in point {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}

/// Counted oracle query: validates, appends to the ledger, returns the exact
/// triple for f_i at w.
pub fn query<I: FiniteSum + ?Sized>(
    instance: &I,
    w: &[f64],
    i: usize,
    ledger: &mut CallLedger,
) -> Result<OracleResponse> {
    instance.check_query(i, w)?;
    ledger.record(i, w);
    instance.component(i, w)
}

/// (F(w) - F*)/(F(0) - F*). Uncounted; errors on degenerate instances where
/// F(0) = F*.
pub fn suboptimality_ratio<I: FiniteSum + ?Sized>(instance: &I, w: &[f64]) -> Result<f64> {
    let f_star = instance.optimum_value();
    let zero = vec![0.0; instance.dim()];
    let denom = instance.objective(&zero)? - f_star;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateRatio);
    }
    let num = instance.objective(w)? - f_star;
    Ok((num / denom).max(0.0))
}

/// Index-obliviousness verdict: the ledger's index sequence must be a prefix
/// of a schedule declared before any query was made.
pub fn obliviousness_audit(ledger: &CallLedger, declared_schedule: &[usize]) -> bool {
    let seq = ledger.index_sequence();
    seq.len() <= declared_schedule.len() && seq == declared_schedule[..seq.len()]
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
