//! Exact oracles for the full, possibly cyclic model: variable elimination
//! with a treewidth guard, and brute-force enumeration for desk-scale models.

use crate::model::Model;
use crate::{Error, Result};

/// Largest state count allowed for an induced elimination cluster.
pub const CLUSTER_GUARD: usize = 1 << 20;

/// Largest configuration count for brute-force enumeration (2^20).
pub const BRUTE_GUARD: f64 = 20.0;

struct Factor {
    vars: Vec<u32>,
    table: Vec<f64>,
}

/// Sums out the vertices of `model` in the given `order`, optionally clamping
/// one vertex to a fixed state. Factor tables are renormalized by their max
/// after every elimination so strong couplings cannot overflow.
fn eliminate(model: &Model, order: &[u32], clamp: Option<(u32, usize)>) -> Result<f64> {
    let k = model.state_count();
    let m = model.vertex_count();
    debug_assert_eq!(order.len(), m);

    let mut factors: Vec<Factor> = Vec::new();
    for v in 0..m as u32 {
        let mut table: Vec<f64> = (0..k).map(|x| model.unary(v, x).exp()).collect();
        if let Some((cv, cx)) = clamp {
            if cv == v {
                for (x, t) in table.iter_mut().enumerate() {
                    if x != cx {
                        *t = 0.0;
                    }
                }
            }
        }
        factors.push(Factor {
            vars: vec![v],
            table,
        });
    }
    for (e, &(v, w)) in model.graph.edges().iter().enumerate() {
        let mut table = vec![0.0; k * k];
        for x in 0..k {
            for y in 0..k {
                table[x * k + y] = model.pairwise(e, x, y).exp();
            }
        }
        factors.push(Factor {
            vars: vec![v, w],
            table,
        });
    }

    let mut log_scale = 0.0;
    for &v in order {
        let (involved, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = rest;

        // Union scope of the involved factors.
        let mut scope: Vec<u32> = involved.iter().flat_map(|f| f.vars.iter().copied()).collect();
        scope.sort_unstable();
        scope.dedup();
        let mut size = 1usize;
        for _ in &scope {
            size = size.checked_mul(k).unwrap_or(usize::MAX);
            if size > CLUSTER_GUARD {
                return Err(Error::Intractable(format!(
                    "elimination cluster over {} variables exceeds {} states",
                    scope.len(),
                    CLUSTER_GUARD
                )));
            }
        }

        // Strides of each factor's variables within the scope enumeration.
        let pos_of = |u: u32| scope.iter().position(|&s| s == u).unwrap();
        let strides: Vec<Vec<(usize, usize)>> = involved
            .iter()
            .map(|f| {
                f.vars
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| (pos_of(u), k.pow((f.vars.len() - 1 - i) as u32)))
                    .collect()
            })
            .collect();

        let vpos = pos_of(v);
        let new_vars: Vec<u32> = scope.iter().copied().filter(|&u| u != v).collect();
        let mut new_table = vec![0.0; size / k];
        let mut digits = vec![0usize; scope.len()];
        for _ in 0..size {
            let mut prod = 1.0;
            for (f, st) in involved.iter().zip(&strides) {
                let idx: usize = st.iter().map(|&(p, s)| digits[p] * s).sum();
                prod *= f.table[idx];
            }
            // Index into the reduced table (scope minus v).
            let mut ridx = 0usize;
            for (p, &d) in digits.iter().enumerate() {
                if p != vpos {
                    ridx = ridx * k + d;
                }
            }
            new_table[ridx] += prod;

            // Odometer.
            for p in (0..digits.len()).rev() {
                digits[p] += 1;
                if digits[p] < k {
                    break;
                }
                digits[p] = 0;
            }
        }

        let mx = new_table.iter().cloned().fold(0.0f64, f64::max);
        if mx > 0.0 {
            for t in &mut new_table {
                *t /= mx;
            }
            log_scale += mx.ln();
        }
        factors.push(Factor {
            vars: new_vars,
            table: new_table,
        });
    }

    // Every scope is empty now; the product of the scalars remains.
    let mut rem = 1.0;
    for f in &factors {
        debug_assert!(f.vars.is_empty());
        rem *= f.table[0];
    }
    if rem <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log_scale + rem.ln())
}

/// Min-degree elimination order on the interaction graph.
pub fn min_degree_order(model: &Model) -> Vec<u32> {
    let m = model.vertex_count();
    let mut adj: Vec<std::collections::BTreeSet<u32>> = vec![Default::default(); m];
    for &(v, w) in model.graph.edges() {
        adj[v as usize].insert(w);
        adj[w as usize].insert(v);
    }
    let mut eliminated = vec![false; m];
    let mut order = Vec::with_capacity(m);
    for _ in 0..m {
        let v = (0..m)
            .filter(|&v| !eliminated[v])
            .min_by_key(|&v| adj[v].len())
            .unwrap() as u32;
        let neighbors: Vec<u32> = adj[v as usize].iter().copied().collect();
        for &a in &neighbors {
            adj[a as usize].remove(&v);
            for &b in &neighbors {
                if a != b {
                    adj[a as usize].insert(b);
                }
            }
        }
        adj[v as usize].clear();
        eliminated[v as usize] = true;
        order.push(v);
    }
    order
}

/// Log partition value under an explicit elimination order.
pub fn log_partition_with_order(model: &Model, order: &[u32]) -> Result<f64> {
    eliminate(model, order, None)
}

/// Exact log partition value via min-degree variable elimination.
pub fn exact_log_z(model: &Model) -> Result<f64> {
    eliminate(model, &min_degree_order(model), None)
}

pub struct ExactResult {
    pub log_z: f64,
    /// Node marginals, indexed `v * k + x`.
    pub node_marginals: Vec<f64>,
}

/// Exact log partition value and node marginals. Marginals come from
/// renormalized eliminations with one vertex clamped per run.
pub fn exact_log_partition(model: &Model) -> Result<ExactResult> {
    let order = min_degree_order(model);
    let log_z = eliminate(model, &order, None)?;
    let (m, k) = (model.vertex_count(), model.state_count());
    let mut node_marginals = vec![0.0; m * k];
    for v in 0..m as u32 {
        let mut row: Vec<f64> = (0..k)
            .map(|x| eliminate(model, &order, Some((v, x))).map(|lz| (lz - log_z).exp()))
            .collect::<Result<_>>()?;
        let sum: f64 = row.iter().sum();
        for r in &mut row {
            *r /= sum;
        }
        node_marginals[v as usize * k..v as usize * k + k].copy_from_slice(&row);
    }
    Ok(ExactResult {
        log_z,
        node_marginals,
    })
}

pub struct BruteForceResult {
    pub log_z: f64,
    /// Indexed `v * k + x`.
    pub node_marginals: Vec<f64>,
    /// Indexed `edge_id * k^2 + x * k + y`.
    pub edge_marginals: Vec<f64>,
}

/// Exact summation over all configurations. Refuses models with more than
/// 2^20 configurations.
pub fn brute_force(model: &Model) -> Result<BruteForceResult> {
    let (m, k) = (model.vertex_count(), model.state_count());
    if m as f64 * (k as f64).log2() > BRUTE_GUARD {
        return Err(Error::Intractable(format!(
            "{m} vertices with {k} states exceed the brute-force guard"
        )));
    }
    let total = k.pow(m as u32);
    let mut scores = Vec::with_capacity(total);
    let mut config = vec![0usize; m];
    loop {
        scores.push(model.score(&config));
        if !advance(&mut config, k) {
            break;
        }
    }
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z_shifted: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
    let log_z = mx + z_shifted.ln();

    let mut node_marginals = vec![0.0; m * k];
    let mut edge_marginals = vec![0.0; model.graph.edges().len() * k * k];
    config.fill(0);
    for s in &scores {
        let p = (s - mx).exp() / z_shifted;
        for (v, &x) in config.iter().enumerate() {
            node_marginals[v * k + x] += p;
        }
        for (e, &(v, w)) in model.graph.edges().iter().enumerate() {
            edge_marginals[e * k * k + config[v as usize] * k + config[w as usize]] += p;
        }
        advance(&mut config, k);
    }
    Ok(BruteForceResult {
        log_z,
        node_marginals,
        edge_marginals,
    })
}

/// Mixed-radix increment; returns false on wrap-around.
fn advance(config: &mut [usize], k: usize) -> bool {
    for c in config.iter_mut() {
        *c += 1;
        if *c < k {
            return true;
        }
        *c = 0;
    }
    false
}
