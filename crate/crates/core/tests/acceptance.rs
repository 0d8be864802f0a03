//! End-to-end acceptance checks. Each test prints one `criterion N: PASS`
//! line on success (run with `--nocapture` to see them); a failed assertion
//! marks the criterion as failed.

use rand::prelude::*;
use smf::exact::{brute_force, exact_log_partition, exact_log_z};
use smf::experiment::{median_sweep_ms, ExperimentConfig, MfMethod};
use smf::gibbs::BlockGibbs;
use smf::graph::{self, Graph, SubgraphSelection};
use smf::meanfield::{fd_jacobian_oracle, materialize_jacobian, Init, MfProblem, SolveOptions};
use smf::model::{ising_grid, ForestVec, Model, StateSpace};
use smf::tree::sum_product;
use std::time::Instant;

fn random_model(rng: &mut impl Rng, g: Graph, k: usize) -> Model {
    let (m, e) = (g.vertex_count(), g.edges().len());
    let unary = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pairwise = (0..e * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Model::new(g, StateSpace::new(k).unwrap(), unary, pairwise).unwrap()
}

fn random_graph(rng: &mut impl Rng, m: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for v in 0..m as u32 {
        for w in v + 1..m as u32 {
            if rng.gen_bool(p) {
                edges.push((v, w));
            }
        }
    }
    Graph::new(m, edges).unwrap()
}

/// Random forest-structured graph: a random tree with edges removed.
fn random_forest_model(rng: &mut impl Rng, m: usize, k: usize) -> (Model, SubgraphSelection) {
    let mut edges = Vec::new();
    for v in 1..m as u32 {
        if rng.gen_bool(0.75) {
            let p = rng.gen_range(0..v);
            edges.push((p, v));
        }
    }
    let g = Graph::new(m, edges).unwrap();
    let model = random_model(rng, g.clone(), k);
    (model, SubgraphSelection::full(&g).unwrap())
}

/// Random acyclic selection over a random graph.
fn random_selection(rng: &mut impl Rng, g: &Graph) -> SubgraphSelection {
    let mut parent: Vec<usize> = (0..g.vertex_count()).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    let mut kept = Vec::new();
    for &(v, w) in g.edges() {
        let (rv, rw) = (find(&mut parent, v as usize), find(&mut parent, w as usize));
        if rv != rw && rng.gen_bool(0.7) {
            parent[rv] = rw;
            kept.push((v, w));
        }
    }
    SubgraphSelection::new(g, &kept).unwrap()
}

#[test]
fn criterion_1_exact_oracle_agreement() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1001);
    for _ in 0..100 {
        let m = rng.gen_range(2..=10);
        let k = if rng.gen_bool(0.5) { 2 } else { 3 };
        // Cap the configuration count so brute force stays in its guard.
        let k = if m as f64 * (k as f64).log2() > 15.0 { 2 } else { k };
        let g = random_graph(&mut rng, m, 0.35);
        let model = random_model(&mut rng, g, k);
        let bf = brute_force(&model).unwrap();
        let ex = exact_log_partition(&model).unwrap();
        assert!((bf.log_z - ex.log_z).abs() <= 1e-10);
        for (a, b) in bf.node_marginals.iter().zip(&ex.node_marginals) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
    let zero_field = Model::zeros(graph::grid(9), StateSpace::spins());
    let lz = exact_log_z(&zero_field).unwrap();
    assert!((lz - 81.0 * 2f64.ln()).abs() <= 1e-9);
    assert!(start.elapsed().as_secs_f64() < 5.0, "too slow");
    println!("criterion 1: PASS");
}

#[test]
fn criterion_2_sum_product_correctness() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1002);
    for _ in 0..200 {
        let m = rng.gen_range(2..=10);
        let k = if rng.gen_bool(0.5) { 2 } else { 3 };
        let (model, sel) = random_forest_model(&mut rng, m, k);
        let decomp = sel.decompose();
        let zeta = smf::model::split_params(&model, &sel).omega;
        let inf = sum_product(&sel, &decomp, &zeta);
        let bf = brute_force(&model).unwrap();
        assert!((inf.log_z - bf.log_z).abs() <= 1e-10);
        for (a, b) in inf.moments.node.iter().zip(&bf.node_marginals) {
            assert!((a - b).abs() <= 1e-10);
        }
        for (slot, e) in sel.kept().iter().enumerate() {
            for x in 0..k {
                for y in 0..k {
                    let got = inf.moments.pair_at(slot, x, y);
                    let want = bf.edge_marginals[e.id * k * k + x * k + y];
                    assert!((got - want).abs() <= 1e-10);
                }
            }
        }
    }

    // Gradient identity on a random forest: d A / d zeta_f = tau_f.
    let (model, sel) = random_forest_model(&mut rng, 8, 3);
    let decomp = sel.decompose();
    let zeta0 = smf::model::split_params(&model, &sel).omega;
    let tau = sum_product(&sel, &decomp, &zeta0).moments;
    let h = 1e-5;
    let mut zeta = zeta0.clone();
    for i in 0..zeta.node.len() {
        zeta.node[i] = zeta0.node[i] + h;
        let plus = sum_product(&sel, &decomp, &zeta).log_z;
        zeta.node[i] = zeta0.node[i] - h;
        let minus = sum_product(&sel, &decomp, &zeta).log_z;
        zeta.node[i] = zeta0.node[i];
        let fd = (plus - minus) / (2.0 * h);
        assert!((fd - tau.node[i]).abs() / tau.node[i].abs().max(1e-12) <= 1e-6);
    }
    for i in 0..zeta.pair.len() {
        zeta.pair[i] = zeta0.pair[i] + h;
        let plus = sum_product(&sel, &decomp, &zeta).log_z;
        zeta.pair[i] = zeta0.pair[i] - h;
        let minus = sum_product(&sel, &decomp, &zeta).log_z;
        zeta.pair[i] = zeta0.pair[i];
        let fd = (plus - minus) / (2.0 * h);
        assert!((fd - tau.pair[i]).abs() / tau.pair[i].abs().max(1e-12) <= 1e-6);
    }
    assert!(start.elapsed().as_secs_f64() < 10.0, "too slow");
    println!("criterion 2: PASS");
}

fn check_jacobian(p: &MfProblem, tau: &ForestVec) {
    let analytic = materialize_jacobian(p, tau);
    let fd = fd_jacobian_oracle(p, tau, 1e-5).unwrap();
    for r in 0..fd.rows {
        for c in 0..fd.cols {
            let (a, b) = (analytic.at(r, c), fd.at(r, c));
            assert!(
                (a - b).abs() / b.abs().max(1.0) <= 1e-5,
                "row {r} col {c}: analytic {a} fd {b}"
            );
        }
    }
    // Auxiliary-chain contract: the chain partition value reproduces the
    // embedded moment on every build.
    let k = p.state_count();
    let gamma = p.gamma(tau);
    for (c, slots) in p.decomp.dropped_intra.iter().enumerate() {
        let _ = c;
        for &slot in slots {
            for s in 0..k {
                for t in 0..k {
                    let ch = p.build_chain(tau, slot, s, t);
                    let g = gamma[slot * k * k + s * k + t];
                    assert!((ch.z - g).abs() / g.abs().max(1e-300) <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn criterion_3_jacobian_verification() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1003);
    let mut count = 0;

    // Intra-only: cycles giving path lengths 2 through 5.
    for k_path in 2..=5usize {
        for k_states in [2usize, 3] {
            let m = k_path + 1;
            let mut edges: Vec<(u32, u32)> = (0..m as u32 - 1).map(|v| (v, v + 1)).collect();
            edges.push((0, m as u32 - 1));
            let g = Graph::new(m, edges.clone()).unwrap();
            let sel = SubgraphSelection::new(&g, &edges[..m - 1]).unwrap();
            let p = MfProblem::new(random_model(&mut rng, g, k_states), sel).unwrap();
            assert_eq!(p.path_of(0).unwrap().len(), k_path);
            let tau = p.init_tau(Init::Perturbed, rng.gen());
            check_jacobian(&p, &tau);
            count += 1;
        }
    }

    // Cross-only: v-acyclic grid presets.
    for n in [2usize, 3] {
        for sel in [graph::empty_selection(n), graph::rows_forest(n)] {
            let p = MfProblem::new(random_model(&mut rng, graph::grid(n), 2), sel).unwrap();
            assert!(p.decomp.is_v_acyclic());
            let tau = p.init_tau(Init::Perturbed, rng.gen());
            check_jacobian(&p, &tau);
            count += 1;
        }
    }

    // Mixed random selections until 50 total instances.
    while count < 50 {
        let m = rng.gen_range(3..=7);
        let g = random_graph(&mut rng, m, 0.5);
        if g.edges().is_empty() {
            continue;
        }
        let sel = random_selection(&mut rng, &g);
        if sel.dropped().is_empty() {
            continue;
        }
        let k = if rng.gen_bool(0.5) { 2 } else { 3 };
        let p = MfProblem::new(random_model(&mut rng, g, k), sel).unwrap();
        let tau = p.init_tau(Init::Perturbed, rng.gen());
        check_jacobian(&p, &tau);
        count += 1;
    }
    assert!(start.elapsed().as_secs_f64() < 30.0, "too slow");
    println!("criterion 3: PASS");
}

/// Criteria 4, 5, and 7 share one full experiment matrix: the three presets
/// across 21 temperatures on the 9x9 Ising model.
#[test]
fn criteria_4_5_7_temperature_matrix() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let opts = cfg.solve_options();

    struct Run {
        method: MfMethod,
        temperature: f64,
        abs_error: f64,
    }
    let mut runs = Vec::new();
    for &t in &cfg.temperatures {
        let exact = exact_log_z(&ising_grid(cfg.size, t).unwrap()).unwrap();
        for method in MfMethod::ALL {
            let problem = MfProblem::new(
                ising_grid(cfg.size, t).unwrap(),
                method.selection(cfg.size),
            )
            .unwrap();
            let sol = problem.solve(&opts);

            // Criterion 4: converged bounds never exceed the true value.
            if sol.converged {
                assert!(
                    sol.lower_bound <= exact + 1e-8,
                    "{} T={t}: {} > {exact}",
                    method.name(),
                    sol.lower_bound
                );
            }
            // Criterion 5: exact block ascent is monotone.
            if matches!(method, MfMethod::Nmf | MfMethod::Smf1) {
                for w in sol.trace.windows(2) {
                    assert!(
                        w[1].objective >= w[0].objective - 1e-10,
                        "{} T={t}: objective decreased",
                        method.name()
                    );
                }
            }
            runs.push(Run {
                method,
                temperature: t,
                abs_error: (sol.lower_bound - exact).abs(),
            });
        }
    }
    println!("criterion 4: PASS");
    println!("criterion 5: PASS");

    // Criterion 7: method quality ordering over the grid.
    let median = |m: MfMethod| -> f64 {
        let mut errs: Vec<f64> = runs
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.abs_error)
            .collect();
        errs.sort_by(|a, b| a.total_cmp(b));
        errs[errs.len() / 2]
    };
    let (e_nmf, e_smf1, e_smf2) = (
        median(MfMethod::Nmf),
        median(MfMethod::Smf1),
        median(MfMethod::Smf2),
    );
    let ordering_ok = e_nmf > e_smf1 && e_smf1 > e_smf2;
    // The comb tree's advantage should peak in the transition region.
    let mut best_t = 0.0;
    let mut best_gap = f64::NEG_INFINITY;
    for &t in &cfg.temperatures {
        let err_of = |m: MfMethod| {
            runs.iter()
                .find(|r| r.method == m && r.temperature == t)
                .unwrap()
                .abs_error
        };
        let gap = err_of(MfMethod::Smf1) - err_of(MfMethod::Smf2);
        if gap > best_gap {
            best_gap = gap;
            best_t = t;
        }
    }
    let location_ok = (1.5..=3.5).contains(&best_t);
    println!(
        "criterion 7: {}",
        if ordering_ok && location_ok {
            "PASS"
        } else {
            "FAIL"
        }
    );
    assert!(start.elapsed().as_secs_f64() < 120.0, "too slow");
    assert!(
        ordering_ok,
        "medians not ordered: nmf {e_nmf}, smf1 {e_smf1}, smf2 {e_smf2}"
    );
    // Known failure mode: at the strongest couplings the comb tree can
    // represent the half/half mixture of the two ground states (its bound
    // comes within 1e-3 of the true value there), while disconnected rows
    // cannot close the resulting ln 2 entropy gap. The smf1-smf2 error gap
    // at the lowest grid temperature is therefore ~ln 2, which exceeds the
    // best gap observed anywhere in the transition window (~0.48).
    assert!(
        location_ok,
        "largest smf1-smf2 gap {best_gap:.4} at T = {best_t}, outside [1.5, 3.5]"
    );
}

#[test]
fn criterion_6_exactness_on_trees() {
    let mut rng = StdRng::seed_from_u64(1006);
    for _ in 0..20 {
        let m = rng.gen_range(2..=10);
        let mut edges = Vec::new();
        for v in 1..m as u32 {
            edges.push((rng.gen_range(0..v), v));
        }
        let g = Graph::new(m, edges).unwrap();
        let model = random_model(&mut rng, g.clone(), 2);
        let a = brute_force(&model).unwrap().log_z;
        let p = MfProblem::new(model, SubgraphSelection::full(&g).unwrap()).unwrap();
        let sol = p.solve(&SolveOptions::default());
        assert!(sol.converged);
        assert!((sol.lower_bound - a).abs() <= 1e-6);
    }
    println!("criterion 6: PASS");
}

#[test]
fn criterion_8_timing_ordering() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default(); // T = 2 timing temperature
    let ms_nmf = median_sweep_ms(MfMethod::Nmf, &cfg, 60).unwrap();
    let ms_smf1 = median_sweep_ms(MfMethod::Smf1, &cfg, 60).unwrap();
    let ms_smf2 = median_sweep_ms(MfMethod::Smf2, &cfg, 60).unwrap();
    assert!(
        ms_smf1 >= 2.0 * ms_nmf,
        "smf1/nmf per-sweep ratio {:.2}",
        ms_smf1 / ms_nmf
    );
    assert!(
        ms_smf2 >= 2.0 * ms_smf1,
        "smf2/smf1 per-sweep ratio {:.2}",
        ms_smf2 / ms_smf1
    );

    // Converged errors at T = 2 follow the quality ordering.
    let exact = exact_log_z(&ising_grid(9, 2.0).unwrap()).unwrap();
    let opts = cfg.solve_options();
    let err = |m: MfMethod| {
        let p = MfProblem::new(ising_grid(9, 2.0).unwrap(), m.selection(9)).unwrap();
        let sol = p.solve(&opts);
        assert!(sol.converged, "{} did not converge at T = 2", m.name());
        (sol.lower_bound - exact).abs()
    };
    let (e0, e1, e2) = (err(MfMethod::Nmf), err(MfMethod::Smf1), err(MfMethod::Smf2));
    assert!(e2 <= e1 && e1 <= e0, "errors not ordered: {e0} {e1} {e2}");
    assert!(start.elapsed().as_secs_f64() < 120.0, "too slow");
    println!("criterion 8: PASS");
}

#[test]
fn criterion_9_gibbs_correctness() {
    let start = Instant::now();

    // Naive-block kernel equals the sigmoid conditional on a binary model.
    let g = Graph::new(2, [(0, 1)]).unwrap();
    let mut model = Model::zeros(g.clone(), StateSpace::spins());
    let c = 0.8;
    let spin = [-1.0, 1.0];
    for x in 0..2 {
        for y in 0..2 {
            *model.pairwise_mut(0, x, y) = c * spin[x] * spin[y];
        }
    }
    let gibbs = BlockGibbs::new(model, SubgraphSelection::empty(&g)).unwrap();
    let mut zeta = ForestVec::zeros(2, 2, 0);
    for xb in 0..2usize {
        gibbs.block_field(0, &[0, xb], &mut zeta);
        let p_plus =
            zeta.node_at(0, 1).exp() / (zeta.node_at(0, 0).exp() + zeta.node_at(0, 1).exp());
        let sigmoid = 1.0 / (1.0 + (-2.0 * c * spin[xb]).exp());
        assert!((p_plus - sigmoid).abs() <= 1e-12);
    }

    // Long-run marginals on the 3x3 Ising model at T = 3, rows as blocks.
    let model = ising_grid(3, 3.0).unwrap();
    let exact = exact_log_partition(&model).unwrap();
    let gibbs = BlockGibbs::new(model, graph::rows_forest(3)).unwrap();
    let est = gibbs.estimate_marginals(1_000_000, 10_000, 0);
    let worst = est
        .node_marginals
        .iter()
        .zip(&exact.node_marginals)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 0.01, "worst marginal deviation {worst}");
    assert!(start.elapsed().as_secs_f64() < 120.0, "too slow");
    println!("criterion 9: PASS");
}

#[test]
fn criterion_10_stationarity() {
    let opts = SolveOptions {
        tol: 1e-10,
        ..Default::default()
    };
    // Grid presets at representative temperatures.
    for t in [1.0, 2.0, 5.0] {
        for method in MfMethod::ALL {
            let p = MfProblem::new(ising_grid(9, t).unwrap(), method.selection(9)).unwrap();
            let sol = p.solve(&opts);
            assert!(sol.converged, "{} T={t} did not converge", method.name());
            let r = p.fixed_point_residual(&sol.tau);
            assert!(r <= 1e-6, "{} T={t}: residual {r}", method.name());
        }
    }
    // Random small models across all selection regimes.
    let mut rng = StdRng::seed_from_u64(1010);
    for _ in 0..10 {
        let model = random_model(&mut rng, graph::grid(3), 2);
        for sel in [
            graph::empty_selection(3),
            graph::rows_forest(3),
            graph::comb_tree(3),
        ] {
            let p = MfProblem::new(model.clone(), sel).unwrap();
            let sol = p.solve(&opts);
            assert!(sol.converged);
            let r = p.fixed_point_residual(&sol.tau);
            assert!(r <= 1e-6, "residual {r}");
        }
    }
    println!("criterion 10: PASS");
}
