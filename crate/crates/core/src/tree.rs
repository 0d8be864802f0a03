//! Exact inference on the tractable forest family: two-pass sum-product per
//! tree component, forest entropy from node/edge marginals, and exact
//! forward-filter/backward-sample draws.
//!
//! All message passing is done in log space, so arbitrarily strong couplings
//! cannot overflow.

use crate::graph::{ComponentDecomposition, SubgraphSelection};
use crate::model::ForestVec;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Clamp for probabilities inside logarithms; converged marginals can
/// saturate at strong coupling.
pub const LOG_CLAMP: f64 = 1e-12;

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Scratch buffers for message passing, indexed `vertex * k + state`.
/// One workspace serves any number of sequential component passes.
pub struct SumProductWs {
    k: usize,
    /// Message from a non-root vertex to its parent, indexed by parent state.
    msg_up: Vec<f64>,
    /// Node potential plus all child messages.
    bel_up: Vec<f64>,
    /// Message arriving from the parent side.
    ctx: Vec<f64>,
    scratch: Vec<f64>,
}

impl SumProductWs {
    pub fn new(m: usize, k: usize) -> Self {
        Self {
            k,
            msg_up: vec![0.0; m * k],
            bel_up: vec![0.0; m * k],
            ctx: vec![0.0; m * k],
            scratch: vec![0.0; k],
        }
    }
}

/// Exact moments and per-component log partition values of a forest family.
pub struct ForestInference {
    pub moments: ForestVec,
    pub comp_log_z: Vec<f64>,
    pub log_z: f64,
}

/// Pairwise potential of kept `slot` read in `(first, second)` traversal
/// order, transposing when the traversal runs against the canonical
/// orientation.
#[inline]
fn edge_pot(
    zeta: &ForestVec,
    sel: &SubgraphSelection,
    slot: usize,
    first: u32,
    x_first: usize,
    x_second: usize,
) -> f64 {
    if sel.kept()[slot].v == first {
        zeta.pair_at(slot, x_first, x_second)
    } else {
        zeta.pair_at(slot, x_second, x_first)
    }
}

/// Leaf-to-root pass for component `c`; fills `bel_up`/`msg_up` and returns
/// the component log partition value.
pub(crate) fn upward_pass(
    sel: &SubgraphSelection,
    decomp: &ComponentDecomposition,
    c: usize,
    zeta: &ForestVec,
    ws: &mut SumProductWs,
) -> f64 {
    let k = ws.k;
    let comp = &decomp.components[c];
    for &v in &comp.vertices {
        let base = v as usize * k;
        for x in 0..k {
            ws.bel_up[base + x] = zeta.node_at(v, x);
        }
    }
    for idx in (1..comp.vertices.len()).rev() {
        let v = comp.vertices[idx];
        let (p, slot) = comp.parent[idx].expect("non-root has a parent");
        let vb = v as usize * k;
        let pb = p as usize * k;
        for xp in 0..k {
            for (xv, s) in ws.scratch.iter_mut().enumerate() {
                *s = edge_pot(zeta, sel, slot, p, xp, xv) + ws.bel_up[vb + xv];
            }
            ws.msg_up[vb + xp] = logsumexp(&ws.scratch);
        }
        for xp in 0..k {
            ws.bel_up[pb + xp] += ws.msg_up[vb + xp];
        }
    }
    let root = comp.vertices[0] as usize;
    logsumexp(&ws.bel_up[root * k..root * k + k])
}

/// Exact node and kept-edge marginals plus the log partition value of one
/// tree component; writes the component's coordinates of `out`.
pub fn component_inference(
    sel: &SubgraphSelection,
    decomp: &ComponentDecomposition,
    c: usize,
    zeta: &ForestVec,
    ws: &mut SumProductWs,
    out: &mut ForestVec,
) -> f64 {
    let k = ws.k;
    let comp = &decomp.components[c];
    let log_z = upward_pass(sel, decomp, c, zeta, ws);

    let root = comp.vertices[0] as usize;
    for x in 0..k {
        ws.ctx[root * k + x] = 0.0;
    }
    for idx in 1..comp.vertices.len() {
        let v = comp.vertices[idx];
        let (p, slot) = comp.parent[idx].unwrap();
        let vb = v as usize * k;
        let pb = p as usize * k;
        for xv in 0..k {
            for (xp, s) in ws.scratch.iter_mut().enumerate() {
                *s = edge_pot(zeta, sel, slot, p, xp, xv) + ws.bel_up[pb + xp] + ws.ctx[pb + xp]
                    - ws.msg_up[vb + xp];
            }
            ws.ctx[vb + xv] = logsumexp(&ws.scratch);
        }
    }

    for &v in &comp.vertices {
        let base = v as usize * k;
        for x in 0..k {
            *out.node_mut(v, x) = (ws.bel_up[base + x] + ws.ctx[base + x] - log_z).exp();
        }
    }
    for idx in 1..comp.vertices.len() {
        let v = comp.vertices[idx];
        let (p, slot) = comp.parent[idx].unwrap();
        let vb = v as usize * k;
        let pb = p as usize * k;
        let canonical_first = sel.kept()[slot].v == p;
        for xp in 0..k {
            let side_p = ws.bel_up[pb + xp] + ws.ctx[pb + xp] - ws.msg_up[vb + xp];
            for xv in 0..k {
                let val = (side_p
                    + edge_pot(zeta, sel, slot, p, xp, xv)
                    + ws.bel_up[vb + xv]
                    - log_z)
                    .exp();
                if canonical_first {
                    *out.pair_mut(slot, xp, xv) = val;
                } else {
                    *out.pair_mut(slot, xv, xp) = val;
                }
            }
        }
    }
    log_z
}

/// Runs sum-product on every component of the selection.
pub fn sum_product(
    sel: &SubgraphSelection,
    decomp: &ComponentDecomposition,
    zeta: &ForestVec,
) -> ForestInference {
    let k = zeta.state_count();
    let mut ws = SumProductWs::new(sel.vertex_count(), k);
    let mut moments = ForestVec::zeros(sel.vertex_count(), k, sel.kept().len());
    let comp_log_z: Vec<f64> = (0..decomp.components.len())
        .map(|c| component_inference(sel, decomp, c, zeta, &mut ws, &mut moments))
        .collect();
    let log_z = comp_log_z.iter().sum();
    ForestInference {
        moments,
        comp_log_z,
        log_z,
    }
}

#[inline]
fn plogp(p: f64) -> f64 {
    // 0 ln 0 = 0 falls out of the clamp: 0 * ln(eps) = 0.
    p * p.max(LOG_CLAMP).ln()
}

/// Shannon entropy of the unique forest distribution with moments `tau`:
/// sum of node entropies minus mutual information on each kept edge.
pub fn forest_entropy(sel: &SubgraphSelection, tau: &ForestVec) -> f64 {
    let k = tau.state_count();
    let mut h = 0.0;
    for v in 0..sel.vertex_count() as u32 {
        for x in 0..k {
            h -= plogp(tau.node_at(v, x));
        }
    }
    for (slot, e) in sel.kept().iter().enumerate() {
        for x in 0..k {
            for y in 0..k {
                let p = tau.pair_at(slot, x, y);
                h -= p
                    * (p.max(LOG_CLAMP).ln()
                        - tau.node_at(e.v, x).max(LOG_CLAMP).ln()
                        - tau.node_at(e.w, y).max(LOG_CLAMP).ln());
            }
        }
    }
    h
}

/// One exact draw from component `c`: filter toward the root, then sample
/// the root and each child conditionally on its parent.
pub fn sample_component(
    sel: &SubgraphSelection,
    decomp: &ComponentDecomposition,
    c: usize,
    zeta: &ForestVec,
    ws: &mut SumProductWs,
    rng: &mut impl Rng,
    config: &mut [usize],
) {
    let k = ws.k;
    let comp = &decomp.components[c];
    upward_pass(sel, decomp, c, zeta, ws);

    let root = comp.vertices[0];
    config[root as usize] =
        sample_from_log_weights(&ws.bel_up[root as usize * k..root as usize * k + k], rng);
    for idx in 1..comp.vertices.len() {
        let v = comp.vertices[idx];
        let (p, slot) = comp.parent[idx].unwrap();
        let xp = config[p as usize];
        let vb = v as usize * k;
        for xv in 0..k {
            ws.scratch[xv] = edge_pot(zeta, sel, slot, p, xp, xv) + ws.bel_up[vb + xv];
        }
        config[v as usize] = sample_from_log_weights(&ws.scratch, rng);
    }
}

fn sample_from_log_weights(logw: &[f64], rng: &mut impl Rng) -> usize {
    let z = logsumexp(logw);
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &lw) in logw.iter().enumerate() {
        acc += (lw - z).exp();
        if u < acc {
            return i;
        }
    }
    logw.len() - 1
}

/// One exact joint draw over all vertices, deterministic given `seed`.
pub fn sample_forest(
    sel: &SubgraphSelection,
    decomp: &ComponentDecomposition,
    zeta: &ForestVec,
    seed: u64,
) -> Vec<usize> {
    let k = zeta.state_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = SumProductWs::new(sel.vertex_count(), k);
    let mut config = vec![0usize; sel.vertex_count()];
    for c in 0..decomp.components.len() {
        sample_component(sel, decomp, c, zeta, &mut ws, &mut rng, &mut config);
    }
    config
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::exact;
    use crate::graph::{Graph, SubgraphSelection};
    use crate::model::{split_params, Model, StateSpace};
    use rand::prelude::*;

    fn two_spin_tree(coupling: f64) -> (Model, SubgraphSelection) {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let mut model = Model::zeros(g.clone(), StateSpace::spins());
        let spin = [-1.0, 1.0];
        for x in 0..2 {
            for y in 0..2 {
                *model.pairwise_mut(0, x, y) = coupling * spin[x] * spin[y];
            }
        }
        let sel = SubgraphSelection::full(&g).unwrap();
        (model, sel)
    }

    #[test]
    fn zero_parameters_give_uniform() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let sel = SubgraphSelection::full(&g).unwrap();
        let decomp = sel.decompose();
        let zeta = ForestVec::zeros(2, 2, 1);
        let inf = sum_product(&sel, &decomp, &zeta);
        assert!((inf.log_z - 4.0f64.ln()).abs() < 1e-12);
        for v in 0..2 {
            for x in 0..2 {
                assert!((inf.moments.node_at(v, x) - 0.5).abs() < 1e-12);
            }
        }
        for x in 0..2 {
            for y in 0..2 {
                assert!((inf.moments.pair_at(0, x, y) - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_spin_closed_form() {
        let (model, sel) = two_spin_tree(1.0);
        let decomp = sel.decompose();
        let zeta = split_params(&model, &sel).omega;
        let inf = sum_product(&sel, &decomp, &zeta);
        assert!((inf.log_z - (4.0 * 1f64.cosh()).ln()).abs() < 1e-12);
        let e = 1f64.exp();
        let p_align = e / (2.0 * e + 2.0 / e);
        assert!((inf.moments.pair_at(0, 1, 1) - p_align).abs() < 1e-12);
        assert!((p_align - 0.4404).abs() < 1e-4);
        assert!((inf.moments.pair_at(0, 1, 0) - (0.5 - p_align)).abs() < 1e-12);
    }

    pub(crate) fn random_tree_model(
        rng: &mut impl Rng,
        m: usize,
        k: usize,
    ) -> (Model, SubgraphSelection) {
        let mut edges = Vec::new();
        for v in 1..m as u32 {
            let p = rng.gen_range(0..v);
            edges.push((p, v));
        }
        let g = Graph::new(m, edges).unwrap();
        let unary = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pairwise = (0..g.edges().len() * k * k)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let model = Model::new(g.clone(), StateSpace::new(k).unwrap(), unary, pairwise).unwrap();
        let sel = SubgraphSelection::full(&g).unwrap();
        (model, sel)
    }

    #[test]
    fn random_tree_matches_brute_force() {
        let mut rng = StdRng::seed_from_u64(21);
        let (model, sel) = random_tree_model(&mut rng, 10, 3);
        let decomp = sel.decompose();
        let zeta = split_params(&model, &sel).omega;
        let inf = sum_product(&sel, &decomp, &zeta);
        let bf = exact::brute_force(&model).unwrap();
        assert!((inf.log_z - bf.log_z).abs() < 1e-10);
        for (a, b) in inf.moments.node.iter().zip(&bf.node_marginals) {
            assert!((a - b).abs() < 1e-10);
        }
        for (slot, e) in sel.kept().iter().enumerate() {
            for x in 0..3 {
                for y in 0..3 {
                    let got = inf.moments.pair_at(slot, x, y);
                    let want = bf.edge_marginals[e.id * 9 + x * 3 + y];
                    assert!((got - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn entropy_isolated_uniform_nodes() {
        let g = Graph::new(3, []).unwrap();
        let sel = SubgraphSelection::empty(&g);
        let mut tau = ForestVec::zeros(3, 2, 0);
        tau.node.fill(0.5);
        let h = forest_entropy(&sel, &tau);
        assert!((h - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_perfect_correlation() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let sel = SubgraphSelection::full(&g).unwrap();
        let mut tau = ForestVec::zeros(2, 2, 1);
        tau.node.fill(0.5);
        *tau.pair_mut(0, 0, 0) = 0.5;
        *tau.pair_mut(0, 1, 1) = 0.5;
        let h = forest_entropy(&sel, &tau);
        assert!((h - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn entropy_two_spin_coupling_one() {
        let (model, sel) = two_spin_tree(1.0);
        let decomp = sel.decompose();
        let zeta = split_params(&model, &sel).omega;
        let tau = sum_product(&sel, &decomp, &zeta).moments;
        // Oracle: -sum p ln p over the four pair states.
        let mut h_ref = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let p = tau.pair_at(0, x, y);
                h_ref -= p * p.ln();
            }
        }
        let h = forest_entropy(&sel, &tau);
        assert!((h - h_ref).abs() < 1e-12);
        assert!((h - 1.0585).abs() < 1e-4);
    }

    #[test]
    fn entropy_matches_brute_force_on_random_forests() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let m = rng.gen_range(2..=8);
            let (mut model, _) = random_tree_model(&mut rng, m, 2);
            // Drop a couple of edges to make a forest.
            let keep: Vec<(u32, u32)> = model
                .graph
                .edges()
                .iter()
                .filter(|_| rng.gen_bool(0.7))
                .cloned()
                .collect();
            let kept_ids: Vec<usize> = keep
                .iter()
                .map(|&(v, w)| model.graph.edge_id(v, w).unwrap())
                .collect();
            // Zero out dropped couplings so the full model IS the forest model.
            let k = model.state_count();
            for e in 0..model.graph.edges().len() {
                if !kept_ids.contains(&e) {
                    for x in 0..k {
                        for y in 0..k {
                            *model.pairwise_mut(e, x, y) = 0.0;
                        }
                    }
                }
            }
            let sel = SubgraphSelection::new(&model.graph, &keep).unwrap();
            let decomp = sel.decompose();
            let zeta = split_params(&model, &sel).omega;
            let tau = sum_product(&sel, &decomp, &zeta).moments;
            let h = forest_entropy(&sel, &tau);

            // Brute-force Shannon entropy of the forest distribution.
            let bf = exact::brute_force(&model).unwrap();
            let mut h_ref = 0.0;
            let mut config = vec![0usize; m];
            loop {
                let p = (model.score(&config) - bf.log_z).exp();
                if p > 0.0 {
                    h_ref -= p * p.ln();
                }
                let mut i = 0;
                while i < m {
                    config[i] += 1;
                    if config[i] < 2 {
                        break;
                    }
                    config[i] = 0;
                    i += 1;
                }
                if i == m {
                    break;
                }
            }
            assert!((h - h_ref).abs() < 1e-10, "H={h} ref={h_ref}");
        }
    }

    #[test]
    fn entropy_equals_rooted_conditional_form() {
        // H = sum over components of H(root) + sum H(child | parent).
        let mut rng = StdRng::seed_from_u64(9);
        let (model, sel) = random_tree_model(&mut rng, 7, 2);
        let decomp = sel.decompose();
        let zeta = split_params(&model, &sel).omega;
        let tau = sum_product(&sel, &decomp, &zeta).moments;

        let hx = |ps: &[f64]| -> f64 { -ps.iter().map(|&p| plogp(p)).sum::<f64>() };
        let mut h_rooted = 0.0;
        for comp in &decomp.components {
            let root = comp.vertices[0];
            let root_ps: Vec<f64> = (0..2).map(|x| tau.node_at(root, x)).collect();
            h_rooted += hx(&root_ps);
            for idx in 1..comp.vertices.len() {
                let v = comp.vertices[idx];
                let (p, slot) = comp.parent[idx].unwrap();
                let mut pair = vec![0.0; 4];
                let canon_first = sel.kept()[slot].v == p;
                for xp in 0..2 {
                    for xv in 0..2 {
                        pair[xp * 2 + xv] = if canon_first {
                            tau.pair_at(slot, xp, xv)
                        } else {
                            tau.pair_at(slot, xv, xp)
                        };
                    }
                }
                let parent_ps: Vec<f64> = (0..2).map(|x| tau.node_at(p, x)).collect();
                let _ = v;
                h_rooted += hx(&pair) - hx(&parent_ps);
            }
        }
        let h = forest_entropy(&sel, &tau);
        assert!((h - h_rooted).abs() < 1e-10);
    }

    #[test]
    fn gradient_identity_by_finite_differences() {
        let mut rng = StdRng::seed_from_u64(33);
        let (model, sel) = random_tree_model(&mut rng, 6, 2);
        let decomp = sel.decompose();
        let zeta0 = split_params(&model, &sel).omega;
        let tau = sum_product(&sel, &decomp, &zeta0).moments;
        let h = 1e-5;
        let mut zeta = zeta0.clone();
        let a_of = |z: &ForestVec| sum_product(&sel, &decomp, z).log_z;
        for i in 0..zeta.node.len() {
            zeta.node[i] = zeta0.node[i] + h;
            let plus = a_of(&zeta);
            zeta.node[i] = zeta0.node[i] - h;
            let minus = a_of(&zeta);
            zeta.node[i] = zeta0.node[i];
            let fd = (plus - minus) / (2.0 * h);
            let rel = (fd - tau.node[i]).abs() / tau.node[i].abs().max(1e-12);
            assert!(rel < 1e-6, "node coord {i}: fd={fd} tau={}", tau.node[i]);
        }
        for i in 0..zeta.pair.len() {
            zeta.pair[i] = zeta0.pair[i] + h;
            let plus = a_of(&zeta);
            zeta.pair[i] = zeta0.pair[i] - h;
            let minus = a_of(&zeta);
            zeta.pair[i] = zeta0.pair[i];
            let fd = (plus - minus) / (2.0 * h);
            let rel = (fd - tau.pair[i]).abs() / tau.pair[i].abs().max(1e-12);
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn hessian_identity_on_small_tree() {
        // Diagonal of the Hessian of A equals Var[phi_f] of the forest family.
        let mut rng = StdRng::seed_from_u64(17);
        let (model, sel) = random_tree_model(&mut rng, 4, 2);
        let decomp = sel.decompose();
        let zeta0 = split_params(&model, &sel).omega;
        let tau = sum_product(&sel, &decomp, &zeta0).moments;
        let h = 1e-3;
        let a0 = sum_product(&sel, &decomp, &zeta0).log_z;
        let mut zeta = zeta0.clone();
        for i in 0..zeta.node.len() {
            zeta.node[i] = zeta0.node[i] + h;
            let plus = sum_product(&sel, &decomp, &zeta).log_z;
            zeta.node[i] = zeta0.node[i] - h;
            let minus = sum_product(&sel, &decomp, &zeta).log_z;
            zeta.node[i] = zeta0.node[i];
            let fd2 = (plus - 2.0 * a0 + minus) / (h * h);
            // phi_f is an indicator, so Var = tau (1 - tau).
            let var = tau.node[i] * (1.0 - tau.node[i]);
            assert!((fd2 - var).abs() < 1e-4, "fd2={fd2} var={var}");
        }
        for i in 0..zeta.pair.len() {
            zeta.pair[i] = zeta0.pair[i] + h;
            let plus = sum_product(&sel, &decomp, &zeta).log_z;
            zeta.pair[i] = zeta0.pair[i] - h;
            let minus = sum_product(&sel, &decomp, &zeta).log_z;
            zeta.pair[i] = zeta0.pair[i];
            let fd2 = (plus - 2.0 * a0 + minus) / (h * h);
            let var = tau.pair[i] * (1.0 - tau.pair[i]);
            assert!((fd2 - var).abs() < 1e-4);
        }
    }

    #[test]
    fn sampling_uniform_at_zero_parameters() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let sel = SubgraphSelection::full(&g).unwrap();
        let decomp = sel.decompose();
        let zeta = ForestVec::zeros(3, 2, 2);
        let mut counts = [[0u32; 2]; 3];
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ws = SumProductWs::new(3, 2);
        let mut config = vec![0usize; 3];
        for _ in 0..n {
            sample_component(&sel, &decomp, 0, &zeta, &mut ws, &mut rng, &mut config);
            for v in 0..3 {
                counts[v][config[v]] += 1;
            }
        }
        for row in counts {
            for c in row {
                assert!((c as f64 / n as f64 - 0.5).abs() < 0.01);
            }
        }
    }

    #[test]
    fn sampling_near_deterministic() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let sel = SubgraphSelection::full(&g).unwrap();
        let decomp = sel.decompose();
        let mut zeta = ForestVec::zeros(2, 2, 1);
        *zeta.node_mut(0, 1) = 20.0;
        *zeta.node_mut(1, 1) = 20.0;
        let mut hits = 0u32;
        let n = 10_000;
        for seed in 0..n {
            let config = sample_forest(&sel, &decomp, &zeta, seed);
            if config == vec![1, 1] {
                hits += 1;
            }
        }
        assert!(hits as f64 / n as f64 > 0.999);
    }

    #[test]
    fn sampling_two_spin_frequency() {
        let (model, sel) = two_spin_tree(1.0);
        let decomp = sel.decompose();
        let zeta = split_params(&model, &sel).omega;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ws = SumProductWs::new(2, 2);
        let mut config = vec![0usize; 2];
        let n = 100_000;
        let mut hits = 0u32;
        for _ in 0..n {
            sample_component(&sel, &decomp, 0, &zeta, &mut ws, &mut rng, &mut config);
            if config == vec![1, 1] {
                hits += 1;
            }
        }
        assert!((hits as f64 / n as f64 - 0.4404).abs() < 0.01);
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let (model, sel) = two_spin_tree(0.7);
        let decomp = sel.decompose();
        let zeta = split_params(&model, &sel).omega;
        let a = sample_forest(&sel, &decomp, &zeta, 42);
        let b = sample_forest(&sel, &decomp, &zeta, 42);
        assert_eq!(a, b);
    }
}
