//! Subcommand implementations. Each reads its inputs from files, writes its
//! outputs and a report, and returns a one-line summary for the terminal.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use mesc::affinity::{
    solve_affinity, FeatureMatrix, RegularizerKind, RegularizerSpec, SolverConfig,
};
use mesc::data::{
    export_heatmap, gen_images, gen_subspaces, load_labels, load_matrix, minmax_normalize,
    save_labels, save_matrix, SyntheticSpec,
};
use mesc::metrics::{block_diagnostics, BlockDiagnostics, MetricsReport};
use mesc::network::{fit, save_checkpoint, NetworkSpec, Tensor, TrainConfig};
use mesc::spectral::spectral_cluster_with_restarts;
use mesc::{Error, Matrix, RngSeed};

use crate::config::{Command, ConfigError, Origin, RunConfig};
use crate::report::Report;

pub const FEATURES_FILE: &str = "features.mescmat";
pub const IMAGES_FILE: &str = "images.mescmat";
pub const LABELS_FILE: &str = "labels.txt";
pub const DATASET_FILE: &str = "dataset.txt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    /// 2 for bad arguments, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(
                Error::InvalidArgument(_) | Error::InfeasibleSpec(_) | Error::InvalidNetwork(_),
            ) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn ensure_parent(path: &Path) -> mesc::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
        }
        _ => Ok(()),
    }
}

fn missing_key(key: &str, reason: &str) -> CliError {
    CliError::Config(ConfigError::Invalid {
        origin: Origin::Default,
        key: key.to_string(),
        reason: reason.to_string(),
    })
}

/// `dir/name` when `input` is a directory, `input` itself otherwise.
fn in_dir(input: &Path, name: &str) -> PathBuf {
    if input.is_dir() {
        input.join(name)
    } else {
        input.to_path_buf()
    }
}

fn existing_truth(cfg: &RunConfig) -> Result<Option<Vec<usize>>> {
    match &cfg.truth {
        Some(p) if p.is_file() => Ok(Some(load_labels(p)?)),
        _ => Ok(None),
    }
}

fn required_truth(cfg: &RunConfig) -> Result<Vec<usize>> {
    let path = cfg
        .truth
        .as_ref()
        .ok_or_else(|| missing_key("truth", "ground-truth labels are required"))?;
    Ok(load_labels(path)?)
}

fn distinct(labels: &[usize]) -> usize {
    labels.iter().collect::<BTreeSet<_>>().len()
}

fn cluster_count(cfg: &RunConfig, truth: Option<&[usize]>) -> Result<usize> {
    match (cfg.k, truth) {
        (Some(k), _) => Ok(k),
        (None, Some(t)) if distinct(t) >= 2 => Ok(distinct(t)),
        _ => Err(missing_key("k", "set k, or provide truth labels to count")),
    }
}

fn add_diagnostics(report: &mut Report, d: &BlockDiagnostics) {
    report.add("diagnostics.mean_block_variance", d.mean_variance());
    let vars: Vec<String> = d.block_variances.iter().map(|v| v.to_string()).collect();
    report.add("diagnostics.block_variances", vars.join(","));
    report.add("diagnostics.off_block_mass", d.off_block_mass);
    report.add("diagnostics.cosine_to_ideal", d.cosine_to_ideal);
}

fn solver_config(cfg: &RunConfig, kind: RegularizerKind) -> SolverConfig {
    let mut sc = SolverConfig::for_regularizer(kind);
    sc.learning_rate = cfg.learning_rate;
    sc.final_learning_rate = cfg.final_learning_rate;
    sc.max_iterations = cfg.steps;
    sc.relative_tolerance = cfg.tol;
    sc.epsilon = cfg.epsilon;
    sc.seed = RngSeed(cfg.seed);
    if let Some(z) = cfg.zero_diagonal {
        sc.zero_diagonal = z;
    }
    sc
}

pub fn run(cfg: &RunConfig) -> Result<String> {
    let mut report = Report::new(cfg);
    let summary = match cfg.command {
        Command::Generate => generate(cfg, &mut report)?,
        Command::Solve => solve(cfg, &mut report)?,
        Command::Train => train(cfg, &mut report)?,
        Command::Cluster => cluster(cfg, &mut report)?,
        Command::Eval => eval(cfg, &mut report)?,
        Command::Compare => compare(cfg, &mut report)?,
        Command::Heatmap => heatmap(cfg, &mut report)?,
    };
    report.write(&cfg.report)?;
    Ok(format!("{summary}\nreport: {}", cfg.report.display()))
}

fn generate(cfg: &RunConfig, report: &mut Report) -> Result<String> {
    let spec = SyntheticSpec::uniform(
        cfg.subspaces,
        cfg.subspace_dim,
        cfg.samples,
        cfg.ambient_dim,
        cfg.noise,
        RngSeed(cfg.seed),
    );
    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let (subspaces, layout) = if cfg.image_side > 0 {
        let images = gen_images(&spec, cfg.image_side)?;
        save_matrix(dir.join(IMAGES_FILE), &images.dataset.samples)?;
        let side = cfg.image_side;
        (images.subspaces, format!("images {side}x{side}"))
    } else {
        (gen_subspaces(&spec)?, "vectors".to_string())
    };
    let features = subspaces.features.matrix();
    save_matrix(dir.join(FEATURES_FILE), features)?;
    save_labels(dir.join(LABELS_FILE), &subspaces.labels)?;
    let meta = format!(
        "samples: {}\nfeatures: {}\nlayout: {layout}\nseed: {}\n",
        features.cols(),
        features.rows(),
        cfg.seed
    );
    let meta_path = dir.join(DATASET_FILE);
    fs::write(&meta_path, meta).map_err(|e| io_error(&meta_path, e))?;

    report.add("samples", features.cols());
    report.add("features", features.rows());
    report.add("classes", spec.k());
    report.add("layout", &layout);
    Ok(format!(
        "generated {} samples from {} subspaces ({layout}) in {}",
        features.cols(),
        spec.k(),
        dir.display()
    ))
}

fn solve(cfg: &RunConfig, report: &mut Report) -> Result<String> {
    let z = FeatureMatrix::new(load_matrix(in_dir(&cfg.input, FEATURES_FILE))?)?;
    let reg = RegularizerSpec::new(cfg.reg, cfg.lambda1, cfg.lambda2)?;
    let sc = solver_config(cfg, cfg.reg);
    let out = solve_affinity(&z, &reg, &sc)?;
    ensure_parent(&cfg.output)?;
    save_matrix(&cfg.output, out.affinity.matrix())?;

    let objective = out.objective_trace.last().copied().unwrap_or(f64::NAN);
    report.add("samples", z.samples());
    report.add("zero_diagonal", sc.zero_diagonal);
    report.add("iterations", out.iterations);
    report.add("converged", out.converged);
    report.add("objective", objective);
    if let Some(truth) = existing_truth(cfg)? {
        add_diagnostics(report, &block_diagnostics(out.affinity.matrix(), &truth)?);
    }
    Ok(format!(
        "solved {} affinity for {} samples: {} iterations, objective {objective:.6e}{}; wrote {}",
        cfg.reg,
        z.samples(),
        out.iterations,
        if out.converged {
            ""
        } else {
            " (not converged)"
        },
        cfg.output.display()
    ))
}

/// Reads `images.mescmat` and its `layout: images HxW` line.
fn load_images(dir: &Path) -> Result<(Matrix, usize, usize)> {
    let meta_path = dir.join(DATASET_FILE);
    let meta = fs::read_to_string(&meta_path).map_err(|e| io_error(&meta_path, e))?;
    let layout = meta
        .lines()
        .find_map(|l| l.strip_prefix("layout:"))
        .map(str::trim)
        .unwrap_or("");
    let dims = layout
        .strip_prefix("images ")
        .and_then(|s| s.split_once('x'))
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)));
    let Some((h, w)) = dims else {
        return Err(Error::InvalidArgument(format!(
            "{} holds no images; generate with image_side > 0",
            dir.display()
        ))
        .into());
    };
    Ok((load_matrix(dir.join(IMAGES_FILE))?, h, w))
}

fn train(cfg: &RunConfig, report: &mut Report) -> Result<String> {
    let (images, h, w) = load_images(&cfg.input)?;
    let x = Tensor::from_images(&images, h, w)?;
    let spec = NetworkSpec::preset_with_input(&cfg.network, h, w)?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        pretrain_steps: cfg.pretrain_steps,
        finetune_steps: cfg.finetune_steps,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        mode: cfg.mode,
        pretrain: cfg.pretrain,
        epsilon: cfg.epsilon,
        seed: RngSeed(cfg.seed),
    };
    let fitted = fit(&x, &spec, &tc)?;
    ensure_parent(&cfg.output)?;
    save_matrix(&cfg.output, fitted.affinity.matrix())?;
    if let Some(path) = &cfg.checkpoint {
        ensure_parent(path)?;
        save_checkpoint(&fitted.params, path)?;
    }

    report.add("samples", x.batch);
    report.add("parameters", fitted.params.parameter_count());
    report.add("latent_dim", spec.latent_dim());
    if let (Some(first), Some(last)) = (
        fitted.pretrain_history.first(),
        fitted.pretrain_history.last(),
    ) {
        report.add("pretrain.first_reconstruction", first.reconstruction);
        report.add("pretrain.last_reconstruction", last.reconstruction);
    }
    let last = fitted.finetune_history.last().expect("at least one step");
    let first = fitted.finetune_history.first().expect("at least one step");
    report.add("finetune.first_total", first.total);
    report.add("finetune.last_total", last.total);
    report.add("finetune.last_reconstruction", last.reconstruction);
    report.add("finetune.last_self_expressive", last.self_expressive);
    report.add("finetune.last_regularizer", last.regularizer);
    if let Some(truth) = existing_truth(cfg)? {
        add_diagnostics(
            report,
            &block_diagnostics(fitted.affinity.matrix(), &truth)?,
        );
    }
    Ok(format!(
        "trained {} network ({} mode) on {} images: loss {:.6e} -> {:.6e}; wrote {}",
        cfg.network,
        cfg.mode,
        x.batch,
        first.total,
        last.total,
        cfg.output.display()
    ))
}

fn cluster(cfg: &RunConfig, report: &mut Report) -> Result<String> {
    let c = load_matrix(&cfg.input)?;
    let truth = existing_truth(cfg)?;
    let k = cluster_count(cfg, truth.as_deref())?;
    let assignment = spectral_cluster_with_restarts(&c, k, RngSeed(cfg.seed), cfg.restarts)?;
    ensure_parent(&cfg.output)?;
    save_labels(&cfg.output, assignment.labels())?;

    let mut sizes = vec![0usize; k];
    for &l in assignment.labels() {
        sizes[l] += 1;
    }
    let sizes: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    report.add("samples", assignment.labels().len());
    report.add("k", k);
    report.add("cluster_sizes", sizes.join(","));
    Ok(format!(
        "clustered {} samples into {k} groups; wrote {}",
        assignment.labels().len(),
        cfg.output.display()
    ))
}

fn eval(cfg: &RunConfig, report: &mut Report) -> Result<String> {
    let truth = required_truth(cfg)?;
    let pred = load_labels(&cfg.pred)?;
    let m = MetricsReport::evaluate(&truth, &pred)?;
    report.add("samples", truth.len());
    report.add("acc", m.acc_percent);
    report.add("nmi", m.nmi_percent);
    report.add("homogeneity", m.homogeneity);
    report.add("completeness", m.completeness);
    if let Some(path) = &cfg.affinity {
        add_diagnostics(report, &block_diagnostics(&load_matrix(path)?, &truth)?);
    }
    Ok(format!(
        "ACC {:.2}%  NMI {:.2}%  homogeneity {:.4}  completeness {:.4}",
        m.acc_percent, m.nmi_percent, m.homogeneity, m.completeness
    ))
}

struct CompareRow {
    kind: RegularizerKind,
    iterations: usize,
    converged: bool,
    metrics: MetricsReport,
    diagnostics: BlockDiagnostics,
}

fn compare_one(
    cfg: &RunConfig,
    z: &FeatureMatrix,
    truth: &[usize],
    k: usize,
    kind: RegularizerKind,
) -> mesc::Result<CompareRow> {
    let reg = RegularizerSpec::new(kind, cfg.lambda1, cfg.lambda2)?;
    let out = solve_affinity(z, &reg, &solver_config(cfg, kind))?;
    let c = out.affinity.matrix();
    let pred = spectral_cluster_with_restarts(c, k, RngSeed(cfg.seed), cfg.restarts)?;
    Ok(CompareRow {
        kind,
        iterations: out.iterations,
        converged: out.converged,
        metrics: MetricsReport::evaluate(truth, pred.labels())?,
        diagnostics: block_diagnostics(c, truth)?,
    })
}

fn compare(cfg: &RunConfig, report: &mut Report) -> Result<String> {
    let z = FeatureMatrix::new(load_matrix(in_dir(&cfg.input, FEATURES_FILE))?)?;
    let truth = required_truth(cfg)?;
    let k = cluster_count(cfg, Some(&truth))?;
    let (z_ref, truth_ref) = (&z, &truth);
    let results: Vec<mesc::Result<CompareRow>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .regs
            .iter()
            .map(|&kind| s.spawn(move || compare_one(cfg, z_ref, truth_ref, k, kind)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    let rows = results.into_iter().collect::<mesc::Result<Vec<_>>>()?;

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kind.to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                format!("{:.4}", r.metrics.acc_percent),
                format!("{:.4}", r.metrics.nmi_percent),
                format!("{:.6e}", r.diagnostics.mean_variance()),
                format!("{:.6e}", r.diagnostics.off_block_mass),
                format!("{:.6}", r.diagnostics.cosine_to_ideal),
            ]
        })
        .collect();
    report.add("samples", z.samples());
    report.add("k", k);
    report.table(
        "regularizers",
        &[
            "reg",
            "iterations",
            "converged",
            "acc",
            "nmi",
            "block_variance",
            "off_block_mass",
            "cosine_to_ideal",
        ],
        &table,
    );
    let best = rows
        .iter()
        .max_by(|a, b| {
            a.diagnostics
                .cosine_to_ideal
                .total_cmp(&b.diagnostics.cosine_to_ideal)
        })
        .expect("at least one regularizer");
    Ok(format!(
        "compared {} regularizers on {} samples; highest cosine to ideal: {}",
        rows.len(),
        z.samples(),
        best.kind
    ))
}

fn heatmap(cfg: &RunConfig, report: &mut Report) -> Result<String> {
    let c = load_matrix(&cfg.input)?;
    let mut m = minmax_normalize(&c.map(f64::abs));
    if let Some(truth) = existing_truth(cfg)? {
        if truth.len() == c.rows() && c.is_square() {
            let mut order: Vec<usize> = (0..truth.len()).collect();
            order.sort_by_key(|&i| truth[i]);
            m = m.select_rows(&order).select_columns(&order);
            report.add("ordered_by", "truth");
        }
    }
    ensure_parent(&cfg.output)?;
    export_heatmap(&m, &cfg.output)?;
    report.add("rows", m.rows());
    report.add("cols", m.cols());
    Ok(format!(
        "wrote {}x{} heatmap to {}",
        m.rows(),
        m.cols(),
        cfg.output.display()
    ))
}
