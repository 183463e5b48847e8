//! Dense interior-point solver for concave maximization over Hermitian PSD
//! matrix blocks.
//!
//! Problem form:
//!
//! ```text
//! maximize    F(y)
//! subject to  g_j(y) >= 0            (concave)
//!             e_k(y)  = 0            (affine)
//!             diag(W_b) = d_b        (optional, per block)
//!             W_b PSD
//! where       y = (x, u),  u_i = Re Tr(A_i W_{b(i)})
//! ```
//!
//! Matrix blocks only enter through the real features `u_i`, so the Newton
//! system is reduced to the small space of scalars, features and their
//! multipliers; the block update has the closed form
//! `dW = W - W (sum_i lambda_i A_i + Diag(nu)) W`.

mod expr;
mod ipm;
mod kkt;

use std::fmt::Write as _;

pub use expr::{Affine, Concave, Layout, Var};
pub use ipm::{solve, SolveOptions};
pub use kkt::{kkt_report, KktResiduals};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, trace_product, CMatrix, CVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub dim: usize,
    /// Fixed diagonal, if constrained.
    pub diagonal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMatrix {
    /// `A = a a^H`, so the feature is `a^H W a`.
    RankOne(CVector),
    /// Hermitian `A`.
    Dense(CMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub block: usize,
    pub matrix: FeatureMatrix,
}

impl Feature {
    pub fn eval(&self, w: &CMatrix) -> f64 {
        match &self.matrix {
            FeatureMatrix::RankOne(a) => quad_form(w, a),
            FeatureMatrix::Dense(a) => trace_product(a, w),
        }
    }

    fn dim(&self) -> usize {
        match &self.matrix {
            FeatureMatrix::RankOne(a) => a.len(),
            FeatureMatrix::Dense(a) => a.nrows(),
        }
    }

    /// The Hermitian matrix `A` itself.
    pub fn dense(&self) -> CMatrix {
        match &self.matrix {
            FeatureMatrix::RankOne(a) => crate::linalg::outer(a),
            FeatureMatrix::Dense(a) => a.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSpec {
    pub blocks: Vec<BlockSpec>,
    pub scalars: usize,
    pub features: Vec<Feature>,
    pub objective: Concave,
    pub inequalities: Vec<Concave>,
    pub equalities: Vec<Affine>,
}

impl Default for SubproblemSpec {
    fn default() -> Self {
        Self::new()
    }
}

impl SubproblemSpec {
    pub fn new() -> Self {
        Self {
            blocks: Vec::new(),
            scalars: 0,
            features: Vec::new(),
            objective: Concave::constant(0.0),
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn add_block(&mut self, dim: usize, diagonal: Option<Vec<f64>>) -> usize {
        self.blocks.push(BlockSpec { dim, diagonal });
        self.blocks.len() - 1
    }

    pub fn add_scalar(&mut self) -> Var {
        self.scalars += 1;
        Var::Scalar(self.scalars - 1)
    }

    pub fn add_feature(&mut self, block: usize, matrix: FeatureMatrix) -> Var {
        self.features.push(Feature { block, matrix });
        Var::Feature(self.features.len() - 1)
    }

    pub fn layout(&self) -> Layout {
        Layout {
            scalars: self.scalars,
            features: self.features.len(),
        }
    }

    /// Number of barrier terms, i.e. the duality-gap multiplier `m` in `m/t`.
    pub fn barrier_degree(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum::<usize>() + self.inequalities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let layout = self.layout();
        let bad = |msg: String| Err(Error::Subproblem(msg));
        for (i, b) in self.blocks.iter().enumerate() {
            if b.dim == 0 {
                return bad(format!("block {i} has zero dimension"));
            }
            if let Some(d) = &b.diagonal {
                if d.len() != b.dim || d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return bad(format!(
                        "block {i} needs {} positive diagonal entries",
                        b.dim
                    ));
                }
            }
        }
        for (i, f) in self.features.iter().enumerate() {
            let Some(block) = self.blocks.get(f.block) else {
                return bad(format!("feature {i} references missing block {}", f.block));
            };
            if f.dim() != block.dim {
                return bad(format!(
                    "feature {i} has dimension {} but block {} has {}",
                    f.dim(),
                    f.block,
                    block.dim
                ));
            }
        }
        let check = |what: &str, e: &Concave| {
            e.validate(&layout)
                .map_err(|m| Error::Subproblem(format!("{what}: {m}")))
        };
        check("objective", &self.objective)?;
        for (j, g) in self.inequalities.iter().enumerate() {
            check(&format!("inequality {j}"), g)?;
        }
        for (k, e) in self.equalities.iter().enumerate() {
            check(&format!("equality {k}"), &Concave::Affine(e.clone()))?;
        }
        Ok(())
    }

    /// Features `u_i(W)` for the given blocks.
    pub fn feature_values(&self, blocks: &[CMatrix]) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| f.eval(&blocks[f.block]))
            .collect()
    }

    pub fn reduced_vector(&self, point: &Point) -> Vec<f64> {
        let mut y = point.scalars.clone();
        y.extend(self.feature_values(&point.blocks));
        y
    }

    /// Plain-text dump for cross-checking against an external modeling tool.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scalars {}", self.scalars);
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(out, "block {i} dim {} diagonal {:?}", b.dim, b.diagonal);
        }
        for (i, f) in self.features.iter().enumerate() {
            let kind = match &f.matrix {
                FeatureMatrix::RankOne(a) => format!(
                    "rank_one {:?}",
                    a.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>()
                ),
                FeatureMatrix::Dense(a) => format!(
                    "dense {:?}",
                    a.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>()
                ),
            };
            let _ = writeln!(out, "feature {i} block {} {kind}", f.block);
        }
        let _ = writeln!(out, "maximize {:?}", self.objective);
        for g in &self.inequalities {
            let _ = writeln!(out, "subject_to {g:?} >= 0");
        }
        for e in &self.equalities {
            let _ = writeln!(out, "subject_to {e:?} == 0");
        }
        out
    }
}

/// Values of every variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub blocks: Vec<CMatrix>,
    pub scalars: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub point: Point,
    pub objective: f64,
    pub kkt: KktResiduals,
    /// Newton steps, including any phase-I steps.
    pub iterations: usize,
    pub status: ConicStatus,
}
