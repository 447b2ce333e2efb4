//! Acceptance checks, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, PoisonError};
use std::time::{Duration, Instant};

use mesc::affinity::{
    closed_form_frobenius, me_gradient, neg_entropy, objective, permute_affinity, solve_affinity,
    AffinityMatrix, FeatureMatrix, RegularizerKind, RegularizerSpec, SolverConfig,
};
use mesc::data::{gen_images, gen_subspaces, SyntheticSpec};
use mesc::metrics::{accuracy, block_diagnostics, nmi, BlockDiagnostics};
use mesc::network::{build_network, fit, loss_and_grads, Mode, NetworkSpec, Tensor, TrainConfig};
use mesc::spectral::spectral_cluster;
use mesc::{Matrix, RngSeed};
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

/// Criteria run one at a time so each wall-clock limit covers only its own work.
static EXCLUSIVE: Mutex<()> = Mutex::new(());

fn exclusive() -> MutexGuard<'static, ()> {
    EXCLUSIVE.lock().unwrap_or_else(PoisonError::into_inner)
}

fn verdict(criterion: u32, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {status} ({detail})");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn benchmark(noise: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let spec = SyntheticSpec::uniform(3, 3, 40, 30, noise, RngSeed(seed));
    let s = gen_subspaces(&spec).unwrap();
    (s.features, s.labels)
}

#[test]
fn criterion_01_analytic_fixed_point() {
    let _guard = exclusive();
    let start = Instant::now();
    let z = FeatureMatrix::new(Matrix::zeros(6, 12)).unwrap();
    let reg = RegularizerSpec::new(RegularizerKind::MaxEntropy, 1.0, 10.0).unwrap();
    let out = solve_affinity(&z, &reg, &SolverConfig::default()).unwrap();
    let target = (-1.0f64).exp();
    let worst = out
        .affinity
        .matrix()
        .as_slice()
        .iter()
        .map(|c| (c - target).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    verdict(
        1,
        worst <= 1e-4 && within(elapsed, 5),
        format!("max |c - 1/e| = {worst:.3e} (need <= 1e-4), {elapsed:.2?} (limit 5s)"),
    );
}

#[test]
fn criterion_02_frobenius_matches_closed_form() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut rng = RngSeed(2).rng();
    let kind = RegularizerKind::FrobeniusSquared;
    let cfg = SolverConfig {
        learning_rate: 1e-3,
        final_learning_rate: Some(1e-6),
        max_iterations: 20_000,
        relative_tolerance: 0.0,
        zero_diagonal: false,
        ..SolverConfig::for_regularizer(kind)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let z = FeatureMatrix::new(random_matrix(10, 40, -1.0, 1.0, &mut rng)).unwrap();
        let reg = RegularizerSpec::new(kind, 1.0, 1.0).unwrap();
        let solved = solve_affinity(&z, &reg, &cfg).unwrap();
        let exact = closed_form_frobenius(&z, 1.0, 1.0).unwrap();
        worst = worst.max(solved.affinity.matrix().max_abs_diff(exact.matrix()));
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        worst <= 1e-5 && within(elapsed, 30),
        format!(
            "max abs diff over 10 instances {worst:.3e} (need <= 1e-5), {elapsed:.2?} (limit 30s)"
        ),
    );
}

fn relative_error(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6)
}

#[test]
fn criterion_03_gradients_match_finite_differences() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut rng = RngSeed(3).rng();

    let mut affinity_worst: f64 = 0.0;
    for _ in 0..20 {
        let (d, n) = (rng.random_range(2..6), rng.random_range(3..9));
        let z = FeatureMatrix::new(random_matrix(d, n, -1.0, 1.0, &mut rng)).unwrap();
        let c = random_matrix(n, n, 0.05, 1.0, &mut rng);
        let (l1, l2) = (rng.random_range(0.1..2.0), rng.random_range(0.1..10.0));
        let g = me_gradient(&z, &AffinityMatrix::new(c.clone()).unwrap(), l1, l2).unwrap();
        let reg = RegularizerSpec::new(RegularizerKind::MaxEntropy, l1, l2).unwrap();
        let h = 1e-6;
        for idx in 0..n * n {
            let mut plus = c.clone();
            plus.as_mut_slice()[idx] += h;
            let mut minus = c.clone();
            minus.as_mut_slice()[idx] -= h;
            let fd = (objective(&z, &plus, &reg).unwrap() - objective(&z, &minus, &reg).unwrap())
                / (2.0 * h);
            affinity_worst = affinity_worst.max(relative_error(fd, g.as_slice()[idx]));
        }
    }

    let spec = NetworkSpec::from_layers(8, 8, &[(3, 3), (3, 2)]).unwrap();
    let mut network_worst: f64 = 0.0;
    for point in 0..20 {
        let mut params = build_network(&spec, RngSeed(100 + point)).unwrap();
        for l in params.encoder.iter_mut().chain(&mut params.decoder) {
            l.bias
                .iter_mut()
                .for_each(|b| *b = rng.random_range(0.05..0.2));
        }
        let batch = 2;
        let data = (0..batch * 64)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let x = Tensor::new(batch, 1, 8, 8, data).unwrap();
        let c = random_matrix(batch, batch, 0.05, 0.6, &mut rng);
        let cfg = TrainConfig {
            mode: if point % 2 == 0 {
                Mode::Decoupled
            } else {
                Mode::Coupled
            },
            lambda1: rng.random_range(0.1..2.0),
            lambda2: rng.random_range(0.1..2.0),
            ..TrainConfig::default()
        };
        let analytic = loss_and_grads(&x, &params, &c, &cfg).unwrap();
        let loss = |p: &mesc::network::NetworkParams, c: &Matrix| {
            loss_and_grads(&x, p, c, &cfg).unwrap().components.total
        };
        let h = 1e-5;
        let tensors = params.tensors().count();
        for t in 0..tensors {
            for i in 0..params.tensors().nth(t).unwrap().len() {
                let mut plus = params.clone();
                plus.tensors_mut().nth(t).unwrap()[i] += h;
                let mut minus = params.clone();
                minus.tensors_mut().nth(t).unwrap()[i] -= h;
                let fd = (loss(&plus, &c) - loss(&minus, &c)) / (2.0 * h);
                let an = analytic.params.tensors().nth(t).unwrap()[i];
                network_worst = network_worst.max(relative_error(fd, an));
            }
        }
        for i in 0..batch * batch {
            let mut plus = c.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = c.clone();
            minus.as_mut_slice()[i] -= h;
            let fd = (loss(&params, &plus) - loss(&params, &minus)) / (2.0 * h);
            network_worst = network_worst.max(relative_error(fd, analytic.c.as_slice()[i]));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        3,
        affinity_worst <= 1e-4 && network_worst <= 1e-3 && within(elapsed, 60),
        format!(
            "affinity worst rel err {affinity_worst:.3e} (need <= 1e-4), network worst rel err \
             {network_worst:.3e} (need <= 1e-3), {elapsed:.2?} (limit 60s)"
        ),
    );
}

fn me_pipeline(noise: f64, seed: u64) -> (BlockDiagnostics, f64, f64) {
    let (z, labels) = benchmark(noise, seed);
    let reg = RegularizerSpec::new(RegularizerKind::MaxEntropy, 1.0, 10.0).unwrap();
    let out = solve_affinity(&z, &reg, &SolverConfig::default()).unwrap();
    let c = out.affinity.matrix();
    let pred = spectral_cluster(c, 3, RngSeed(seed)).unwrap();
    (
        block_diagnostics(c, &labels).unwrap(),
        accuracy(&labels, pred.labels()).unwrap(),
        nmi(&labels, pred.labels()).unwrap(),
    )
}

#[test]
fn criterion_04_block_diagonal_property() {
    let _guard = exclusive();
    let start = Instant::now();
    let (clean, acc, nmi_clean) = me_pipeline(0.0, 4);
    let (_, noisy_acc, _) = me_pipeline(0.05, 4);
    let elapsed = start.elapsed();
    let pass = clean.off_block_mass <= 0.01
        && acc == 100.0
        && nmi_clean == 100.0
        && noisy_acc >= 95.0
        && within(elapsed, 120);
    verdict(
        4,
        pass,
        format!(
            "off-block mass {:.4} (need <= 0.01), ACC {acc:.2} (need = 100), NMI {nmi_clean:.2} (need = 100), \
             noisy ACC {noisy_acc:.2} (need >= 95), {elapsed:.2?} (limit 120s)",
            clean.off_block_mass
        ),
    );
}

#[test]
fn criterion_05_within_subspace_uniformity() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for seed in [51, 52, 53] {
        let (z, labels) = benchmark(0.0, seed);
        let diag = |kind: RegularizerKind| {
            let reg = RegularizerSpec::new(kind, 1.0, 10.0).unwrap();
            let cfg = SolverConfig {
                learning_rate: 1e-3,
                final_learning_rate: Some(1e-5),
                max_iterations: 3_000,
                ..SolverConfig::for_regularizer(kind)
            };
            let out = solve_affinity(&z, &reg, &cfg).unwrap();
            block_diagnostics(out.affinity.matrix(), &labels).unwrap()
        };
        let me = diag(RegularizerKind::MaxEntropy);
        let l1 = diag(RegularizerKind::L1);
        let fro = diag(RegularizerKind::FrobeniusSquared);
        let nuc = diag(RegularizerKind::Nuclear);
        let variance_ok = me.mean_variance() < l1.mean_variance();
        let cosine_ok = [&l1, &fro, &nuc]
            .iter()
            .all(|o| me.cosine_to_ideal >= o.cosine_to_ideal);
        if !(variance_ok && cosine_ok) {
            failures.push(seed);
        }
        details.push(format!(
            "seed {seed}: var me {:.3e} vs l1 {:.3e}; cos me {:.3} l1 {:.3} fro {:.3} nuc {:.3}",
            me.mean_variance(),
            l1.mean_variance(),
            me.cosine_to_ideal,
            l1.cosine_to_ideal,
            fro.cosine_to_ideal,
            nuc.cosine_to_ideal
        ));
    }
    let elapsed = start.elapsed();
    verdict(
        5,
        failures.is_empty() && within(elapsed, 300),
        format!(
            "{} (need me variance below l1, me cosine highest); {elapsed:.2?} (limit 300s)",
            details.join("; ")
        ),
    );
}

#[test]
fn criterion_06_permutation_invariance() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut rng = RngSeed(6).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..16);
        let c = random_matrix(n, n, 1e-6, 1.0, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted = permute_affinity(&c, &perm).unwrap();
        worst = worst.max((neg_entropy(&permuted).unwrap() - neg_entropy(&c).unwrap()).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        6,
        worst <= 1e-12 && within(elapsed, 1),
        format!("max |difference| {worst:.3e} (need <= 1e-12), {elapsed:.2?} (limit 1s)"),
    );
}

#[test]
fn criterion_07_strict_convexity() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut rng = RngSeed(7).rng();
    let mut smallest = f64::INFINITY;
    for _ in 0..100 {
        let n = rng.random_range(2..10);
        let c1 = random_matrix(n, n, 1e-6, 2.0, &mut rng);
        let c2 = random_matrix(n, n, 1e-6, 2.0, &mut rng);
        let mid = c1.add(&c2).unwrap().scale(0.5);
        let chord = 0.5 * (neg_entropy(&c1).unwrap() + neg_entropy(&c2).unwrap());
        smallest = smallest.min(chord - neg_entropy(&mid).unwrap());
    }
    let elapsed = start.elapsed();
    verdict(
        7,
        smallest > 0.0 && within(elapsed, 1),
        format!(
            "smallest chord - midpoint margin {smallest:.3e} (need > 0), {elapsed:.2?} (limit 1s)"
        ),
    );
}

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.clone();
        let head = rest.remove(i);
        for mut p in permutations(rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Best accuracy over every one-to-one map from predicted to true labels.
fn brute_force_accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let t: Vec<usize> = truth
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let p: Vec<usize> = pred
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let m = t.len().max(p.len());
    let mut best = 0;
    for sigma in permutations((0..m).collect()) {
        let hits = truth
            .iter()
            .zip(pred)
            .filter(|(&y, &c)| {
                let pi = p.iter().position(|&v| v == c).unwrap();
                t.get(sigma[pi]) == Some(&y)
            })
            .count();
        best = best.max(hits);
    }
    100.0 * best as f64 / truth.len() as f64
}

/// NMI written out directly from joint and marginal probabilities.
fn direct_nmi(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len() as f64;
    let ys: BTreeSet<usize> = truth.iter().copied().collect();
    let cs: BTreeSet<usize> = pred.iter().copied().collect();
    let p = |f: &dyn Fn(usize) -> bool| (0..truth.len()).filter(|&i| f(i)).count() as f64 / n;
    let mut mi = 0.0;
    for &y in &ys {
        for &c in &cs {
            let pyc = p(&|i| truth[i] == y && pred[i] == c);
            if pyc > 0.0 {
                let py = p(&|i| truth[i] == y);
                let pc = p(&|i| pred[i] == c);
                mi += pyc * (pyc / (py * pc)).ln();
            }
        }
    }
    let entropy = |set: &BTreeSet<usize>, labels: &[usize]| {
        set.iter()
            .map(|&v| {
                let q = labels.iter().filter(|&&l| l == v).count() as f64 / n;
                -q * q.ln()
            })
            .sum::<f64>()
    };
    let denom = entropy(&ys, truth).max(entropy(&cs, pred));
    if denom == 0.0 {
        // Two constant labelings describe the same partition.
        100.0
    } else {
        100.0 * mi / denom
    }
}

#[test]
fn criterion_08_metric_oracles() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut rng = RngSeed(8).rng();
    let (mut acc_mismatch, mut nmi_worst) = (0usize, 0.0f64);
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let (kt, kp) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
        if (accuracy(&truth, &pred).unwrap() - brute_force_accuracy(&truth, &pred)).abs() > 1e-12 {
            acc_mismatch += 1;
        }
        nmi_worst = nmi_worst.max((nmi(&truth, &pred).unwrap() - direct_nmi(&truth, &pred)).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        8,
        acc_mismatch == 0 && nmi_worst <= 1e-10 && within(elapsed, 30),
        format!(
            "accuracy mismatches {acc_mismatch} / 500, max NMI difference {nmi_worst:.3e} \
             (need <= 1e-10), {elapsed:.2?} (limit 30s)"
        ),
    );
}

fn image_accuracy(x: &Tensor, labels: &[usize], mode: Mode, pretrain: bool, seed: u64) -> f64 {
    let spec = NetworkSpec::preset_with_input("toy", 16, 16).unwrap();
    let cfg = TrainConfig {
        mode,
        pretrain,
        pretrain_steps: 300,
        finetune_steps: 300,
        seed: RngSeed(seed),
        ..TrainConfig::default()
    };
    let fitted = fit(x, &spec, &cfg).unwrap();
    let pred = spectral_cluster(fitted.affinity.matrix(), 3, RngSeed(seed)).unwrap();
    accuracy(labels, pred.labels()).unwrap()
}

#[test]
fn criterion_09_decoupling_robustness() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for seed in [91, 92, 93] {
        let spec = SyntheticSpec::uniform(3, 3, 72, 30, 0.0, RngSeed(seed));
        let images = gen_images(&spec, 16).unwrap();
        let x = Tensor::from_images(&images.dataset.samples, 16, 16).unwrap();
        let labels = images.subspaces.labels;
        let acc = |mode, pretrain| image_accuracy(&x, &labels, mode, pretrain, seed);
        let decoupled_drop = acc(Mode::Decoupled, true) - acc(Mode::Decoupled, false);
        let coupled_drop = acc(Mode::Coupled, true) - acc(Mode::Coupled, false);
        if decoupled_drop > coupled_drop {
            failures.push(seed);
        }
        details.push(format!(
            "seed {seed}: decoupled drop {decoupled_drop:.2}, coupled drop {coupled_drop:.2}"
        ));
    }
    let elapsed = start.elapsed();
    verdict(
        9,
        failures.is_empty() && within(elapsed, 600),
        format!(
            "{} (need decoupled <= coupled); {elapsed:.2?} (limit 600s)",
            details.join("; ")
        ),
    );
}

fn run_cli(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_mesc"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "mesc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Runs every subcommand in `dir` and hashes everything it wrote.
fn pipeline_digest(dir: &Path) -> Vec<(String, String)> {
    let steps: &[&[&str]] = &[
        &[
            "generate",
            "--out",
            "data",
            "--samples",
            "12",
            "--image-side",
            "16",
            "--seed",
            "5",
        ],
        &[
            "solve",
            "--in",
            "data",
            "--out",
            "C.mescmat",
            "--steps",
            "400",
        ],
        &[
            "cluster",
            "--in",
            "C.mescmat",
            "--k",
            "3",
            "--out",
            "predicted.txt",
        ],
        &[
            "eval",
            "--truth",
            "data/labels.txt",
            "--pred",
            "predicted.txt",
            "--affinity",
            "C.mescmat",
        ],
        &["compare", "--in", "data", "--steps", "200"],
        &["heatmap", "--in", "C.mescmat"],
        &[
            "train",
            "--in",
            "data",
            "--out",
            "net_C.mescmat",
            "--pretrain-steps",
            "3",
            "--finetune-steps",
            "3",
            "--checkpoint",
            "net.ckpt",
        ],
        &[
            "train",
            "--in",
            "data",
            "--out",
            "coupled_C.mescmat",
            "--mode",
            "coupled",
            "--pretrain",
            "false",
            "--finetune-steps",
            "3",
        ],
    ];
    for args in steps {
        run_cli(dir, args);
    }
    let mut files: Vec<_> = walk(dir);
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let digest = Sha256::digest(std::fs::read(&p).unwrap());
            let name = p.strip_prefix(dir).unwrap().display().to_string();
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            (name, hex)
        })
        .collect()
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn criterion_10_determinism() {
    let _guard = exclusive();
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline_digest(a.path());
    let second = pipeline_digest(b.path());
    let reports = first.iter().filter(|(n, _)| n.contains("report")).count();
    let elapsed = start.elapsed();
    verdict(
        10,
        first == second && reports >= 8 && within(elapsed, 120),
        format!(
            "{} files ({reports} reports) hashed identically across two runs: {}, \
             {elapsed:.2?} (limit 120s)",
            first.len(),
            first == second
        ),
    );
}
