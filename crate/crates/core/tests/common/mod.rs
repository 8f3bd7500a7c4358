//! Dense oracles and seeded checks shared by the property suites and the
//! acceptance runner. Each check takes a seed, builds a small random
//! instance and reports the first violation it finds.

#![allow(dead_code)]

use dcn_core::models::{
    dcn_layer, fb_gcnn_layer, source_readout, Arch, Gso, GsoKind, Head, Model, ModelSpec,
};
use dcn_core::nn::{evaluate_loss, forward_backward, Activation, Differentiable, Loss, Targets};
use dcn_core::rng::rng_from;
use dcn_core::sp::{
    all_shifts, apply_filter, apply_shift, fourier, frequency_response, inverse_fourier,
    predecessor_masks, random_subset, transitive_closure, CausalShiftSet, ClosurePair, DagFilter,
};
use dcn_core::{permute, sample_er_dag, Dag, NodePermutation, SignalBatch, WeightLaw};
use ndarray::{Array2, Array3, ArrayView3, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub type Check = Result<(), String>;

pub fn dag(n: usize, p: f64, seed: u64) -> Dag {
    sample_er_dag(n, p, WeightLaw::default(), seed).unwrap()
}

/// A small DAG with size and density drawn from `seed`.
pub fn small_dag(seed: u64) -> Dag {
    let mut rng = rng_from(seed ^ 0x5eed);
    let n = rng.random_range(2..=20);
    let p = rng.random_range(0.0..0.6);
    dag(n, p, seed)
}

pub fn batch(n: usize, m: usize, f: usize, seed: u64) -> SignalBatch {
    let mut rng = rng_from(seed);
    SignalBatch::from_node_major(Array3::from_shape_fn((n, m, f), |_| StandardNormal.sample(&mut rng)))
}

pub fn normals(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn rel(a: &SignalBatch, b: &SignalBatch) -> f64 {
    let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
    diff.sqrt() / b.norm().max(f64::MIN_POSITIVE)
}

fn within(what: &str, err: f64, tol: f64) -> Check {
    if err <= tol {
        Ok(())
    } else {
        Err(format!("{what}: error {err:.3e} above {tol:.0e}"))
    }
}

// ---- dense oracles ----

/// `sum_{r < N} A^r`.
pub fn neumann(dag: &Dag) -> Array2<f64> {
    let a = dag.adjacency_dense();
    let n = dag.n();
    let mut term = Array2::eye(n);
    let mut sum = Array2::eye(n);
    for _ in 1..n {
        term = term.dot(&a);
        sum += &term;
    }
    sum
}

pub fn dense_shift(dag: &Dag, mask: &[bool], transposed: bool) -> Array2<f64> {
    let w = neumann(dag);
    let winv = Array2::<f64>::eye(dag.n()) - dag.adjacency_dense();
    let d = Array2::from_diag(&mask.iter().map(|&b| b as u8 as f64).collect::<ndarray::Array1<f64>>());
    let t = w.dot(&d).dot(&winv);
    if transposed {
        t.reversed_axes()
    } else {
        t
    }
}

/// Applies an `N x N` matrix to every (sample, feature) column.
pub fn dense_apply(t: &Array2<f64>, x: &SignalBatch) -> SignalBatch {
    let (n, m, f) = x.data().dim();
    let flat = x.data().to_shape((n, m * f)).unwrap().to_owned();
    SignalBatch::from_node_major(t.dot(&flat).into_shape_with_order((n, m, f)).unwrap())
}

/// `X Theta` node by node.
pub fn feature_map(x: &SignalBatch, theta: ndarray::ArrayView2<'_, f64>) -> SignalBatch {
    let (n, m, f) = x.data().dim();
    let flat = x.data().to_shape((n * m, f)).unwrap().to_owned();
    SignalBatch::from_node_major(flat.dot(&theta).into_shape_with_order((n, m, theta.ncols())).unwrap())
}

fn add(a: &mut SignalBatch, b: &SignalBatch) {
    a.as_mut_slice().iter_mut().zip(b.as_slice()).for_each(|(x, y)| *x += y);
}

fn relu(mut x: SignalBatch, act: Activation) -> SignalBatch {
    if act == Activation::Relu {
        x.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    }
    x
}

/// `sigma(sum_u T_u X Theta_u)` with materialized shifts.
pub fn dense_dcn(dag: &Dag, shifts: &CausalShiftSet, bank: ArrayView3<'_, f64>, x: &SignalBatch, act: Activation) -> SignalBatch {
    let mut acc = SignalBatch::zeros(x.n_nodes(), x.n_samples(), bank.dim().2);
    for u in 0..shifts.len() {
        let t = dense_shift(dag, shifts.mask(u), shifts.transposed());
        add(&mut acc, &dense_apply(&t, &feature_map(x, bank.index_axis(Axis(0), u))));
    }
    relu(acc, act)
}

/// `sigma(sum_r S^r X Theta_r)` with explicit powers.
pub fn dense_fb(s: &Array2<f64>, taps: ArrayView3<'_, f64>, x: &SignalBatch, act: Activation) -> SignalBatch {
    let mut acc = SignalBatch::zeros(x.n_nodes(), x.n_samples(), taps.dim().2);
    let mut power = Array2::eye(s.nrows());
    for r in 0..taps.dim().0 {
        add(&mut acc, &dense_apply(&power, &feature_map(x, taps.index_axis(Axis(0), r))));
        power = s.dot(&power);
    }
    relu(acc, act)
}

// ---- graph signal processing checks ----

fn setup(seed: u64) -> (Dag, ClosurePair, CausalShiftSet) {
    let d = small_dag(seed);
    let c = transitive_closure(&d);
    let s = all_shifts(&d).with_transposed(seed % 2 == 1);
    (d, c, s)
}

pub fn check_idempotent(seed: u64) -> Check {
    let (d, c, s) = setup(seed);
    let x = batch(d.n(), 3, 2, seed + 1);
    for &k in s.nodes() {
        let once = apply_shift(&c, &s, k, &x).unwrap();
        let twice = apply_shift(&c, &s, k, &once).unwrap();
        let diff = SignalBatch::from_node_major(twice.data() - once.data());
        within(&format!("T_{k} idempotency"), diff.norm() / x.norm(), 1e-9)?;
    }
    Ok(())
}

pub fn check_commute(seed: u64) -> Check {
    let (d, c, s) = setup(seed);
    let x = batch(d.n(), 2, 1, seed + 2);
    let n = d.n();
    for k in 0..n {
        for l in k + 1..n {
            let kl = apply_shift(&c, &s, k, &apply_shift(&c, &s, l, &x).unwrap()).unwrap();
            let lk = apply_shift(&c, &s, l, &apply_shift(&c, &s, k, &x).unwrap()).unwrap();
            within(&format!("T_{k} T_{l} commutation"), rel(&kl, &lk), 1e-9)?;
            // the product is the shift of the meet of the two masks
            let meet: Vec<bool> = s.mask(k).iter().zip(s.mask(l)).map(|(a, b)| *a && *b).collect();
            let oracle = dense_apply(&dense_shift(&d, &meet, s.transposed()), &x);
            within(&format!("T_{k} T_{l} meet"), rel(&kl, &oracle), 1e-9)?;
        }
    }
    Ok(())
}

pub fn check_closure(seed: u64) -> Check {
    let d = small_dag(seed);
    let c = transitive_closure(&d);
    let n = d.n();
    let w = c.w_dense();
    let prod = w.dot(&c.winv_dense());
    let eye = Array2::<f64>::eye(n);
    let err = (&prod - &eye).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    within("W (I - A) = I", err, 1e-10)?;
    let err = (&c.winv_dense().dot(&w) - &eye).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    within("(I - A) W = I", err, 1e-10)?;
    let oracle = neumann(&d);
    let err = (&w - &oracle).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = oracle.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    within("W against the Neumann series", err / scale, 1e-10)
}

pub fn check_dense_equivalence(seed: u64) -> Check {
    let (d, c, s) = setup(seed);
    let x = batch(d.n(), 3, 2, seed + 3);
    for &k in s.nodes() {
        let lazy = apply_shift(&c, &s, k, &x).unwrap();
        let dense = dense_apply(&dense_shift(&d, s.mask(k), s.transposed()), &x);
        within(&format!("T_{k} lazy vs dense"), rel(&lazy, &dense), 1e-9)?;
    }
    let h = normals(s.len(), seed + 4);
    let filt = DagFilter::new(s.clone(), h.clone()).unwrap();
    let lazy = apply_filter(&filt, &c, &x).unwrap();
    let mut dense = x.zeros_like();
    for (u, hk) in h.iter().enumerate() {
        let t = dense_shift(&d, s.mask(u), s.transposed()) * *hk;
        add(&mut dense, &dense_apply(&t, &x));
    }
    within("filter lazy vs dense", rel(&lazy, &dense), 1e-9)?;
    let bank = Array3::from_shape_vec((s.len(), 2, 3), normals(s.len() * 6, seed + 5)).unwrap();
    for act in [Activation::Identity, Activation::Relu] {
        let lazy = dcn_layer(&x, bank.view(), &s, &c, act).unwrap();
        let dense = dense_dcn(&d, &s, bank.view(), &x, act);
        within("DCN layer lazy vs dense", rel(&lazy, &dense), 1e-9)?;
    }
    Ok(())
}

pub fn check_spectral_diagonal(seed: u64) -> Check {
    let (d, _, s) = setup(seed);
    let w = neumann(&d);
    let winv = Array2::<f64>::eye(d.n()) - d.adjacency_dense();
    for u in 0..s.len() {
        let t = dense_shift(&d, s.mask(u), false);
        let conj = winv.dot(&t).dot(&w);
        for ((i, j), v) in conj.indexed_iter() {
            if i == j {
                let want = s.mask(u)[i] as u8 as f64;
                within(&format!("diag of W^-1 T_{u} W at {i}"), (v - want).abs(), 1e-10)?;
            } else {
                within(&format!("off-diagonal of W^-1 T_{u} W"), v.abs(), 1e-10)?;
            }
        }
    }
    let filt = DagFilter::new(s.clone().with_transposed(false), normals(s.len(), seed + 6)).unwrap();
    let resp = frequency_response(&filt);
    let mut h = Array2::zeros((d.n(), d.n()));
    for (u, hk) in filt.coeffs().iter().enumerate() {
        h = h + dense_shift(&d, s.mask(u), false) * *hk;
    }
    let conj = winv.dot(&h).dot(&w);
    for i in 0..d.n() {
        within("frequency response", (conj[(i, i)] - resp[i]).abs(), 1e-9)?;
    }
    Ok(())
}

pub fn check_fourier(seed: u64) -> Check {
    let (d, c, _) = setup(seed);
    let x = batch(d.n(), 4, 2, seed + 7);
    let back = inverse_fourier(&c, &fourier(&c, &x).unwrap()).unwrap();
    within("inverse_fourier(fourier(x))", rel(&back, &x), 1e-10)?;
    let c2 = fourier(&c, &inverse_fourier(&c, &x).unwrap()).unwrap();
    within("fourier(inverse_fourier(c))", rel(&c2, &x), 1e-10)
}

/// Every property at one seed, in a fixed order.
pub fn property_checks(seed: u64) -> Check {
    check_idempotent(seed)?;
    check_commute(seed)?;
    check_closure(seed)?;
    check_dense_equivalence(seed)?;
    check_spectral_diagonal(seed)?;
    check_fourier(seed)
}

// ---- gradients ----

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Entries this small on both sides are compared absolutely.
const FD_FLOOR: f64 = 1e-6;

/// One model per layer family: forward and transposed DCN, a DCN over a
/// shift subset, both polynomial shift operators and the dense network.
pub fn gradient_archs(n: usize, seed: u64) -> Vec<Arch> {
    vec![
        Arch::Dcn { shifts: (0..n).collect(), transposed: false },
        Arch::Dcn { shifts: (0..n).collect(), transposed: true },
        Arch::Dcn { shifts: random_subset(n, n / 2, seed).unwrap(), transposed: false },
        Arch::Poly { gso: Gso { kind: GsoKind::Adjacency, transposed: false }, taps: 3 },
        Arch::Poly { gso: Gso { kind: GsoKind::NormalizedSelfLoops, transposed: true }, taps: 2 },
        Arch::Mlp,
    ]
}

/// Central differences against the analytic gradient on 25 coordinates.
pub fn check_gradients(arch: Arch, loss: Loss, seed: u64) -> Check {
    let n = 8;
    let d = dag(n, 0.4, seed);
    let (head, targets) = match loss {
        Loss::Mse => (Head::Regression, Targets::Signal(batch(n, 5, 1, seed + 11))),
        Loss::CrossEntropy => {
            let labels = (0..5).map(|i| (i + seed as usize) % 3).collect();
            (Head::Classification { candidates: vec![0, 1, 2] }, Targets::Labels(labels))
        }
    };
    let spec = ModelSpec {
        name: format!("{arch:?}"),
        arch,
        dims: vec![2, 3, if loss == Loss::Mse { 1 } else { 3 }],
        head,
    };
    let mut model = Model::build(spec, &d, &mut rng_from(seed)).map_err(|e| e.to_string())?;
    // Zero-initialized biases sit on ReLU kinks when a layer's input is dead;
    // probe at a generic point instead.
    let mut rng = rng_from(seed + 14);
    for p in model.params_mut() {
        p.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
    }
    let x = batch(n, 5, 2, seed + 12);
    forward_backward(&mut model, &x, &targets, loss).map_err(|e| e.to_string())?;
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad().to_vec()).collect();
    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = rng_from(seed + 13);
    let mut probed = 0;
    let mut draws = 0;
    while probed < 25 {
        draws += 1;
        if draws > 500 {
            return Err("too many probes straddle a ReLU kink".into());
        }
        let mut flat = rng.random_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        let orig = model.params()[t].values()[flat];
        let mut at = |v: f64| {
            model.params_mut()[t].values_mut()[flat] = v;
            evaluate_loss(&model, &x, &targets, loss).unwrap()
        };
        let (lo, mid, hi) = (at(orig - FD_EPS), at(orig), at(orig + FD_EPS));
        model.params_mut()[t].values_mut()[flat] = orig;
        let (left, right) = ((mid - lo) / FD_EPS, (hi - mid) / FD_EPS);
        // one-sided slopes that disagree put a kink inside the stencil
        if (right - left).abs() > 1e-3 * left.abs().max(right.abs()).max(1e-3) {
            continue;
        }
        probed += 1;
        let numeric = (hi - lo) / (2.0 * FD_EPS);
        let a = analytic[t][flat];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        if err > FD_TOL {
            return Err(format!(
                "{} tensor {t} entry {flat}: analytic {a:.8e}, numeric {numeric:.8e}",
                model.name()
            ));
        }
    }
    Ok(())
}

pub fn gradient_checks(seed: u64) -> Check {
    for loss in [Loss::Mse, Loss::CrossEntropy] {
        for arch in gradient_archs(8, seed) {
            check_gradients(arch, loss, seed)?;
        }
    }
    Ok(())
}

// ---- permutation equivariance ----

/// Two-layer DCN with a candidate readout, on `dag` and on a relabeled copy
/// with inputs, shifts and candidates carried through the relabeling.
pub fn check_equivariance(seed: u64) -> Check {
    let mut rng = rng_from(seed);
    let n = rng.random_range(4..=20);
    let d = dag(n, rng.random_range(0.1..0.6), seed);
    let perm = NodePermutation::random(n, seed + 1);
    let pd = permute(&d, &perm).map_err(|e| e.to_string())?;
    // storage index in d -> storage index in pd
    let pos = pd.storage_positions();
    let sigma: Vec<usize> = (0..n).map(|s| pos[perm.apply(d.order()[s])]).collect();

    let transposed = seed % 2 == 1;
    let nodes = random_subset(n, (n / 2).max(1), seed + 2).unwrap();
    let pnodes: Vec<usize> = nodes.iter().map(|&u| sigma[u]).collect();
    let s = predecessor_masks(&d, &nodes).unwrap().with_transposed(transposed);
    let ps = predecessor_masks(&pd, &pnodes).unwrap().with_transposed(transposed);
    let (c, pc) = (transitive_closure(&d), transitive_closure(&pd));

    let x = batch(n, 3, 2, seed + 3);
    let mut px = x.zeros_like();
    for i in 0..n {
        px.data_mut().index_axis_mut(Axis(0), sigma[i]).assign(&x.node(i));
    }
    let b1 = Array3::from_shape_vec((nodes.len(), 2, 4), normals(nodes.len() * 8, seed + 4)).unwrap();
    let b2 = Array3::from_shape_vec((nodes.len(), 4, 3), normals(nodes.len() * 12, seed + 5)).unwrap();
    let run = |x: &SignalBatch, s: &CausalShiftSet, c: &ClosurePair| {
        let h = dcn_layer(x, b1.view(), s, c, Activation::Relu).unwrap();
        dcn_layer(&h, b2.view(), s, c, Activation::Identity).unwrap()
    };
    let y = run(&x, &s, &c);
    let py = run(&px, &ps, &pc);
    let mut back = y.zeros_like();
    for i in 0..n {
        back.data_mut().index_axis_mut(Axis(0), i).assign(&py.node(sigma[i]));
    }
    within("DCN output under relabeling", rel(&back, &y), 1e-9)?;

    let cand: Vec<usize> = (0..n.min(5)).collect();
    let pcand: Vec<usize> = cand.iter().map(|&i| sigma[i]).collect();
    let w = normals(3, seed + 6);
    let logits = source_readout(&y, &cand, &w, 0.3).map_err(|e| e.to_string())?;
    let plogits = source_readout(&py, &pcand, &w, 0.3).map_err(|e| e.to_string())?;
    let err = (&logits - &plogits).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = logits.iter().fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
    within("readout under relabeling", err / scale, 1e-9)
}

pub fn fb_oracle_check(seed: u64) -> Check {
    let d = small_dag(seed);
    let x = batch(d.n(), 3, 2, seed + 8);
    let taps = Array3::from_shape_vec((4, 2, 3), normals(24, seed + 9)).unwrap();
    for kind in [GsoKind::Adjacency, GsoKind::NormalizedSelfLoops] {
        for transposed in [false, true] {
            let s = Gso { kind, transposed }.build(&d);
            let lazy = fb_gcnn_layer(&x, taps.view(), &s, Activation::Relu).unwrap();
            let dense = dense_fb(&s.to_dense(), taps.view(), &x, Activation::Relu);
            within("polynomial layer lazy vs dense", rel(&lazy, &dense), 1e-10)?;
        }
    }
    Ok(())
}

// ---- determinism ----

/// Every column of a results CSV except the wall-clock ones.
pub fn metric_columns(path: &std::path::Path) -> Vec<Vec<String>> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let header = rd.headers().unwrap().clone();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| &header[i] != "seconds").collect();
    rd.records()
        .map(|r| {
            let r = r.unwrap();
            keep.iter().map(|&i| r[i].to_string()).collect()
        })
        .collect()
}

/// Runs the same experiment twice, with different worker counts, and
/// compares the written CSVs.
pub fn check_determinism(base: &dcn_core::harness::ExperimentConfig, methods: &[&str]) -> Check {
    use dcn_core::harness::{run_table1, Method};
    let methods: Vec<Method> = methods.iter().map(|m| m.parse().unwrap()).collect();
    let mut tables = Vec::new();
    for workers in [1, 2] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = dcn_core::harness::ExperimentConfig {
            workers,
            output: dir.path().to_path_buf(),
            ..base.clone()
        };
        run_table1(&cfg, cfg.task, &methods).map_err(|e| e.to_string())?;
        let name = format!("table1_{}.csv", cfg.task);
        tables.push((metric_columns(&dir.path().join(&name)), metric_columns(&dir.path().join(name.replace(".csv", "_summary.csv")))));
    }
    if tables[0] != tables[1] {
        return Err("two runs of the same configuration wrote different metrics".into());
    }
    if tables[0].0.iter().any(|row| row.iter().any(|c| c.starts_with("failed"))) {
        return Err("a realization failed".into());
    }
    Ok(())
}
