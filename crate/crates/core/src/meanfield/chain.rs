//! Auxiliary chain families over tree paths.
//!
//! For a dropped intra-component edge with endpoints `(a, b)` and a target
//! state pair `(s, t)`, the approximate moment is the path marginal
//!
//! ```text
//! gamma(s, t) = sum over interior states of
//!     T_0[s, y_1] * prod_i T_i[y_i, y_{i+1}] / R_i(y_i)
//! ```
//!
//! where `T_i` is the pair table of the i-th path edge read in traversal
//! orientation and `R_i(y)` is its row sum. The chain's partition value
//! equals `gamma(s, t)` by the telescoping identity, and its forward/backward
//! vectors yield every partial derivative of `gamma` with respect to the path
//! tables in closed form.

use crate::graph::{SubgraphSelection, TreePath};
use crate::model::ForestVec;

/// Denominator clamp; row sums can vanish when marginals saturate, and the
/// matching forward weights vanish with them.
const DENOM_CLAMP: f64 = 1e-12;

/// Pair table of kept `slot` read with `first` as the row vertex.
pub(crate) fn oriented_table(
    sel: &SubgraphSelection,
    tau: &ForestVec,
    slot: usize,
    first: u32,
) -> Vec<f64> {
    let k = tau.state_count();
    let canonical = sel.kept()[slot].v == first;
    let mut out = vec![0.0; k * k];
    for x in 0..k {
        for y in 0..k {
            out[x * k + y] = if canonical {
                tau.pair_at(slot, x, y)
            } else {
                tau.pair_at(slot, y, x)
            };
        }
    }
    out
}

/// Forward/backward state of one `(dropped edge, s, t)` auxiliary chain.
pub struct AuxiliaryChain {
    k: usize,
    s: usize,
    t: usize,
    /// Oriented path tables; `tables[i][x * k + y]` with `x` at path vertex i.
    tables: Vec<Vec<f64>>,
    /// Clamped row sums of each table.
    row_sums: Vec<Vec<f64>>,
    /// `alpha[i - 1]`: forward weights over states of interior vertex i.
    alpha: Vec<Vec<f64>>,
    /// `beta[i - 1]`: backward weights over states of interior vertex i.
    beta: Vec<Vec<f64>>,
    /// Chain partition value; equals `gamma(s, t)`.
    pub z: f64,
}

impl AuxiliaryChain {
    pub fn new(
        sel: &SubgraphSelection,
        tau: &ForestVec,
        path: &TreePath,
        s: usize,
        t: usize,
    ) -> Self {
        let k = tau.state_count();
        let n = path.len();
        let tables: Vec<Vec<f64>> = path
            .edge_slots
            .iter()
            .enumerate()
            .map(|(i, &slot)| oriented_table(sel, tau, slot, path.vertices[i]))
            .collect();
        let row_sums: Vec<Vec<f64>> = tables
            .iter()
            .map(|t| {
                (0..k)
                    .map(|x| t[x * k..x * k + k].iter().sum::<f64>().max(DENOM_CLAMP))
                    .collect()
            })
            .collect();

        if n == 1 {
            let z = tables[0][s * k + t];
            return Self {
                k,
                s,
                t,
                tables,
                row_sums,
                alpha: Vec::new(),
                beta: Vec::new(),
                z,
            };
        }

        let mut alpha = Vec::with_capacity(n - 1);
        alpha.push((0..k).map(|y| tables[0][s * k + y]).collect::<Vec<f64>>());
        for i in 1..n - 1 {
            let prev: &Vec<f64> = &alpha[i - 1];
            let next = (0..k)
                .map(|yp| {
                    (0..k)
                        .map(|y| prev[y] * tables[i][y * k + yp] / row_sums[i][y])
                        .sum()
                })
                .collect();
            alpha.push(next);
        }

        let mut beta = vec![Vec::new(); n - 1];
        beta[n - 2] = (0..k)
            .map(|y| tables[n - 1][y * k + t] / row_sums[n - 1][y])
            .collect();
        for i in (1..n - 1).rev() {
            let down = beta[i].clone();
            beta[i - 1] = (0..k)
                .map(|y| {
                    (0..k)
                        .map(|yp| tables[i][y * k + yp] * down[yp] / row_sums[i][y])
                        .sum()
                })
                .collect();
        }

        let z = (0..k).map(|y| alpha[0][y] * beta[0][y]).sum();
        Self {
            k,
            s,
            t,
            tables,
            row_sums,
            alpha,
            beta,
            z,
        }
    }

    /// Number of path edges.
    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Chain marginal of interior vertex `i` (1-based along the path).
    pub fn node_marginal(&self, i: usize, y: usize) -> f64 {
        self.alpha[i - 1][y] * self.beta[i - 1][y] / self.z.max(DENOM_CLAMP)
    }

    /// `d gamma / d T_i[x, y]` in the i-th table's traversal orientation.
    ///
    /// Three cases fall out of the product rule: the first table enters
    /// linearly, interior tables also perturb their own row sum, and the last
    /// table contributes only through column `t` of its normalized rows.
    pub fn d_table(&self, i: usize, x: usize, y: usize) -> f64 {
        let k = self.k;
        let n = self.len();
        if n == 1 {
            return if x == self.s && y == self.t { 1.0 } else { 0.0 };
        }
        if i == 0 {
            if x != self.s {
                return 0.0;
            }
            return self.beta[0][y];
        }
        let r = self.row_sums[i][x];
        if i == n - 1 {
            let last = &self.tables[n - 1];
            let ind = if y == self.t { 1.0 } else { 0.0 };
            return self.alpha[n - 2][x] * (ind - last[x * k + self.t] / r) / r;
        }
        self.alpha[i - 1][x] * (self.beta[i][y] - self.beta[i - 1][x]) / r
    }
}

/// The full `gamma` table of one intra dropped edge: the product of the
/// row-normalized path tables with the first table unnormalized. Entry
/// `[s * k + t]` equals `AuxiliaryChain::z` for `(s, t)`.
pub(crate) fn path_marginal_table(
    sel: &SubgraphSelection,
    tau: &ForestVec,
    path: &TreePath,
) -> Vec<f64> {
    let k = tau.state_count();
    let mut prod = oriented_table(sel, tau, path.edge_slots[0], path.vertices[0]);
    for (i, &slot) in path.edge_slots.iter().enumerate().skip(1) {
        let table = oriented_table(sel, tau, slot, path.vertices[i]);
        let rows: Vec<f64> = (0..k)
            .map(|x| table[x * k..x * k + k].iter().sum::<f64>().max(DENOM_CLAMP))
            .collect();
        let mut next = vec![0.0; k * k];
        for s in 0..k {
            for t in 0..k {
                let mut acc = 0.0;
                for y in 0..k {
                    acc += prod[s * k + y] * table[y * k + t] / rows[y];
                }
                next[s * k + t] = acc;
            }
        }
        prod = next;
    }
    prod
}
