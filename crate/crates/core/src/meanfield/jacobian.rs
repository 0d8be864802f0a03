//! Materialized embedding Jacobians and the finite-difference oracle.
//!
//! The solver never builds `J` explicitly; these functions exist so the
//! closed-form entries can be checked coordinate-wise. `Gamma` treats its
//! coordinates as free variables: a cross dropped edge reads exactly the two
//! endpoint unary coordinates, and an intra dropped edge reads exactly the
//! pair tables of its path edges (node marginals enter as row sums). Every
//! other partial derivative is structurally zero.

use super::chain::AuxiliaryChain;
use super::MfProblem;
use crate::model::ForestVec;
use crate::{Error, Result};

/// Dense Jacobian of `Gamma`: one row per dropped-edge coordinate `g`, one
/// column per `F'` coordinate (node coordinates first, then kept-pair
/// coordinates in `ForestVec` layout).
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.cols + col]
    }

    /// Number of entries with magnitude above `eps`.
    pub fn support(&self, eps: f64) -> usize {
        self.data.iter().filter(|v| v.abs() > eps).count()
    }
}

fn node_col(tau: &ForestVec, v: u32, x: usize) -> usize {
    v as usize * tau.state_count() + x
}

fn pair_col(tau: &ForestVec, slot: usize, x: usize, y: usize) -> usize {
    let k = tau.state_count();
    tau.node.len() + slot * k * k + x * k + y
}

/// Closed-form Jacobian from the cross-product and auxiliary-chain formulas.
pub fn materialize_jacobian(p: &MfProblem, tau: &ForestVec) -> Jacobian {
    let k = p.state_count();
    let mut jac = Jacobian::zeros(p.sel.dropped().len() * k * k, tau.dim());
    for (slot, e) in p.sel.dropped().iter().enumerate() {
        match p.path_of(slot) {
            None => {
                for s in 0..k {
                    for t in 0..k {
                        let row = slot * k * k + s * k + t;
                        *jac.at_mut(row, node_col(tau, e.v, s)) += tau.node_at(e.w, t);
                        *jac.at_mut(row, node_col(tau, e.w, t)) += tau.node_at(e.v, s);
                    }
                }
            }
            Some(path) => {
                for s in 0..k {
                    for t in 0..k {
                        let row = slot * k * k + s * k + t;
                        let ch = AuxiliaryChain::new(&p.sel, tau, path, s, t);
                        for (i, &eslot) in path.edge_slots.iter().enumerate() {
                            let canonical = p.sel.kept()[eslot].v == path.vertices[i];
                            for x in 0..k {
                                for y in 0..k {
                                    let d = ch.d_table(i, x, y);
                                    let col = if canonical {
                                        pair_col(tau, eslot, x, y)
                                    } else {
                                        pair_col(tau, eslot, y, x)
                                    };
                                    *jac.at_mut(row, col) += d;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    jac
}

/// Central finite differences of `gamma` with every `tau` coordinate treated
/// as a free variable. Refuses problems with more than 10^6 entries.
pub fn fd_jacobian_oracle(p: &MfProblem, tau: &ForestVec, h: f64) -> Result<Jacobian> {
    let k = p.state_count();
    let rows = p.sel.dropped().len() * k * k;
    let cols = tau.dim();
    if rows * cols > 1_000_000 {
        return Err(Error::Intractable(format!(
            "dense Jacobian oracle refused: {rows} x {cols} entries"
        )));
    }
    let mut jac = Jacobian::zeros(rows, cols);
    let mut work = tau.clone();
    let n_node = tau.node.len();
    for col in 0..cols {
        fn coord(w: &mut ForestVec, col: usize, n_node: usize) -> &mut f64 {
            if col < n_node {
                &mut w.node[col]
            } else {
                &mut w.pair[col - n_node]
            }
        }
        let base = *coord(&mut work, col, n_node);
        *coord(&mut work, col, n_node) = base + h;
        let plus = p.gamma(&work);
        *coord(&mut work, col, n_node) = base - h;
        let minus = p.gamma(&work);
        *coord(&mut work, col, n_node) = base;
        for row in 0..rows {
            *jac.at_mut(row, col) = (plus[row] - minus[row]) / (2.0 * h);
        }
    }
    Ok(jac)
}
