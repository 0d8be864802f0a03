//! Block Gibbs sampling over the component decomposition of an acyclic edge
//! selection.
//!
//! Each kernel application resamples one tree component exactly from its
//! conditional given the rest of the configuration: dropped edges with one
//! endpoint inside the block boost that endpoint's unary parameters by the
//! dropped-edge row selected by the outside neighbor's current state. The
//! boost pattern mirrors the v-acyclic mean-field Jacobian contribution with
//! the outside marginals replaced by point masses.
//!
//! Selections with b-acyclic components are refused: a dropped edge inside a
//! component would enter the conditional as a pairwise term closing a cycle,
//! so the conditional would no longer be tree-structured.

use crate::graph::{ComponentDecomposition, ComponentKind, CrossTouch, SubgraphSelection};
use crate::model::{split_params, ForestVec, Model};
use crate::tree::{sample_component, SumProductWs};
use crate::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct BlockGibbs {
    pub model: Model,
    pub sel: SubgraphSelection,
    pub decomp: ComponentDecomposition,
    omega: ForestVec,
    vartheta: Vec<f64>,
    cross_by_comp: Vec<Vec<CrossTouch>>,
}

impl BlockGibbs {
    pub fn new(model: Model, sel: SubgraphSelection) -> Result<Self> {
        if !sel.matches_graph(&model.graph) {
            return Err(Error::InvalidSelection(
                "selection was built against a different graph".into(),
            ));
        }
        let decomp = sel.decompose();
        for (c, comp) in decomp.components.iter().enumerate() {
            if comp.kind == ComponentKind::BAcyclic {
                return Err(Error::BAcyclicSampler(c));
            }
        }
        let split = split_params(&model, &sel);
        let cross_by_comp = decomp.cross_touches(&sel);
        Ok(Self {
            model,
            sel,
            decomp,
            omega: split.omega,
            vartheta: split.vartheta,
            cross_by_comp,
        })
    }

    pub fn start(&self, seed: u64) -> GibbsState {
        GibbsState {
            config: vec![0; self.model.vertex_count()],
            sweeps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ws: SumProductWs::new(self.model.vertex_count(), self.model.state_count()),
            zeta: self.omega.clone(),
        }
    }

    /// Effective tree parameters of component `c`'s conditional given
    /// `config` outside it; written into the component's coordinates of
    /// `zeta`.
    pub fn block_field(&self, c: usize, config: &[usize], zeta: &mut ForestVec) {
        let k = self.model.state_count();
        let comp = &self.decomp.components[c];
        for &v in &comp.vertices {
            for x in 0..k {
                *zeta.node_mut(v, x) = self.omega.node_at(v, x);
            }
        }
        for touch in &self.cross_by_comp[c] {
            let xb = config[touch.outside as usize];
            for x in 0..k {
                let th = if touch.inside_first {
                    self.vartheta[touch.slot * k * k + x * k + xb]
                } else {
                    self.vartheta[touch.slot * k * k + xb * k + x]
                };
                *zeta.node_mut(touch.inside, x) += th;
            }
        }
        // Kept-pair parameters never change; zeta starts as a copy of omega
        // and only node coordinates are rewritten.
    }

    /// Resamples block `c` from its exact conditional.
    pub fn block_kernel(&self, c: usize, state: &mut GibbsState) {
        let GibbsState {
            config,
            rng,
            ws,
            zeta,
            ..
        } = state;
        self.block_field(c, config, zeta);
        sample_component(&self.sel, &self.decomp, c, zeta, ws, rng, config);
    }

    /// One systematic scan over all blocks in index order.
    pub fn sweep(&self, state: &mut GibbsState) {
        for c in 0..self.decomp.components.len() {
            self.block_kernel(c, state);
        }
        state.sweeps += 1;
    }

    /// Empirical node marginals over `sweeps - burn_in` post-burn-in sweeps.
    pub fn estimate_marginals(&self, sweeps: usize, burn_in: usize, seed: u64) -> MarginalEstimate {
        assert!(sweeps > burn_in);
        let (m, k) = (self.model.vertex_count(), self.model.state_count());
        let mut state = self.start(seed);
        for _ in 0..burn_in {
            self.sweep(&mut state);
        }
        let mut counts = vec![0.0f64; m * k];
        let n = sweeps - burn_in;
        for _ in 0..n {
            self.sweep(&mut state);
            for (v, &x) in state.config.iter().enumerate() {
                counts[v * k + x] += 1.0;
            }
        }
        for c in counts.iter_mut() {
            *c /= n as f64;
        }
        MarginalEstimate {
            node_marginals: counts,
            samples: n,
            burn_in,
        }
    }
}

/// One Markov chain: current configuration plus owned generator and scratch.
pub struct GibbsState {
    pub config: Vec<usize>,
    pub sweeps: usize,
    rng: ChaCha8Rng,
    ws: SumProductWs,
    zeta: ForestVec,
}

pub struct MarginalEstimate {
    /// Indexed `v * k + x`; each vertex row sums to 1.
    pub node_marginals: Vec<f64>,
    pub samples: usize,
    pub burn_in: usize,
}
