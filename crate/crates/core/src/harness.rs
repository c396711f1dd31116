//! Experiment runner and CLI.
//!
//! An experiment is a TOML file naming a dataset, a split plan, boosting
//! settings, a grid of algorithms and a grid of twisters with sweep levels.
//! Every (twister, level, fold) twists the training split once; all algorithms
//! are fitted on that same twisted split and scored on the untouched test
//! split. Seeds for splits, twists and synthetic data all derive from the
//! master seed, so a run is reproducible bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::adaptive::{estimate_noise, NoiseEstimate};
use crate::boosting::{convergence_certificate, fit, Algorithm, BoostConfig, BoostDiagnostics, CertificateParams, Surrogate};
use crate::data::{load_csv, split_indices, synth_xd6, write_csv, Column, Dataset, Schema, SplitPlan};
use crate::error::{Error, Result};
use crate::links::{exact_inverse_link, pil_gap_report, PilTable};
use crate::losses::AlphaParam;
use crate::math::derive_seed;
use crate::trees::feature_importance;
use crate::twisters::{TwisterKind, TwisterSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "UNTWIST_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "results";
pub const RESULTS_FILE: &str = "results.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CURVES_HEADER: &str = "dataset,algorithm,twister,level,mean,ci,n";
const XD6_DEFAULT_M: usize = 973;

fn xd6_default_m() -> usize {
    XD6_DEFAULT_M
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Synthetic xd6; the seed derives from the master seed unless given.
    Xd6 {
        #[serde(default = "xd6_default_m")]
        m: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        positive_label: String,
        /// Inline schema; exactly one of `columns` and `schema_file` is needed.
        #[serde(default)]
        columns: Option<Vec<Column>>,
        #[serde(default)]
        schema_file: Option<PathBuf>,
        #[serde(default)]
        name: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SchemaFile {
    columns: Vec<Column>,
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Xd6 { .. } => "xd6".into(),
            DatasetSpec::Csv { name: Some(n), .. } => n.clone(),
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSpec::Csv { path, schema_file, .. } = self {
            *path = base.join(&*path);
            if let Some(s) = schema_file {
                *s = base.join(&*s);
            }
        }
    }

    pub fn load(&self, master_seed: u64) -> Result<Dataset> {
        match self {
            DatasetSpec::Xd6 { m, seed } => {
                if *m == 0 {
                    return Err(Error::Config("xd6 needs m >= 1".into()));
                }
                Ok(synth_xd6(*m, seed.unwrap_or_else(|| derive_seed(master_seed, &[1]))))
            }
            DatasetSpec::Csv {
                path,
                label_column,
                positive_label,
                columns,
                schema_file,
                ..
            } => {
                let schema = match (columns, schema_file) {
                    (Some(c), None) => Schema::new(c.clone()),
                    (None, Some(f)) => {
                        let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
                        let parsed: SchemaFile =
                            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", f.display())))?;
                        Schema::new(parsed.columns)
                    }
                    _ => {
                        return Err(Error::Config(
                            "a csv dataset needs exactly one of `columns` and `schema_file`".into(),
                        ))
                    }
                };
                let (ds, report) = load_csv(path, &schema, label_column, positive_label)?;
                if report.rows_dropped > 0 {
                    log::warn!("{}: dropped {} unparseable rows", path.display(), report.rows_dropped);
                }
                Ok(ds)
            }
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: DatasetSpec =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostSettings {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_depth")]
    pub tree_depth: usize,
    #[serde(default = "default_max_abs")]
    pub max_abs: f64,
    /// Step scale used where an algorithm entry gives none.
    #[serde(default = "default_a_f")]
    pub a_f: f64,
}

fn default_iterations() -> usize {
    1000
}
fn default_depth() -> usize {
    3
}
fn default_max_abs() -> f64 {
    1.0
}
fn default_a_f() -> f64 {
    8.0
}

impl Default for BoostSettings {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            tree_depth: default_depth(),
            max_abs: default_max_abs(),
            a_f: default_a_f(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Adaboost,
    Pilboost {
        alpha: Vec<f64>,
        /// One step scale per α; defaults to `boost.a_f`.
        #[serde(default)]
        a_f: Option<Vec<f64>>,
    },
    /// α₀ estimated per fold from the twisted training split.
    PilboostAdaptive {
        #[serde(default)]
        a_f: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwisterGrid {
    #[serde(flatten)]
    pub kind: TwisterKind,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default)]
    pub boost: BoostSettings,
    pub algorithms: Vec<AlgorithmSpec>,
    pub twisters: Vec<TwisterGrid>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Record boosting diagnostics and certificates for every fit.
    #[serde(default)]
    pub diagnostics: bool,
}

/// Split settings as written in a config; the split seed derives from the
/// master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSettings {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_fraction() -> f64 {
    0.7
}
fn default_folds() -> usize {
    10
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train_fraction: default_fraction(),
            folds: default_folds(),
        }
    }
}

/// One column of the algorithm grid.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmPoint {
    Fixed { algorithm: Algorithm, a_f: f64 },
    Adaptive { a_f: f64 },
}

impl AlgorithmPoint {
    pub fn label(&self) -> String {
        match self {
            AlgorithmPoint::Fixed {
                algorithm: Algorithm::AdaBoost,
                ..
            } => "adaboost".into(),
            AlgorithmPoint::Fixed {
                algorithm: Algorithm::PilBoost { alpha },
                ..
            } => format!("pilboost(alpha={alpha})"),
            AlgorithmPoint::Adaptive { .. } => "pilboost-adaptive".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.dataset.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            train_fraction: self.split.train_fraction,
            folds: self.split.folds,
            seed: derive_seed(self.seed, &[2]),
        }
    }

    pub fn algorithm_points(&self) -> Result<Vec<AlgorithmPoint>> {
        let mut out = Vec::new();
        for spec in &self.algorithms {
            match spec {
                AlgorithmSpec::Adaboost => out.push(AlgorithmPoint::Fixed {
                    algorithm: Algorithm::AdaBoost,
                    a_f: self.boost.a_f,
                }),
                AlgorithmSpec::Pilboost { alpha, a_f } => {
                    if alpha.is_empty() {
                        return Err(Error::Config("pilboost needs a nonempty alpha list".into()));
                    }
                    if let Some(a) = a_f {
                        if a.len() != alpha.len() {
                            return Err(Error::Config(format!(
                                "{} a_f values for {} alphas",
                                a.len(),
                                alpha.len()
                            )));
                        }
                    }
                    for (k, &al) in alpha.iter().enumerate() {
                        out.push(AlgorithmPoint::Fixed {
                            algorithm: Algorithm::PilBoost { alpha: al },
                            a_f: a_f.as_ref().map_or(self.boost.a_f, |v| v[k]),
                        });
                    }
                }
                AlgorithmSpec::PilboostAdaptive { a_f } => out.push(AlgorithmPoint::Adaptive {
                    a_f: a_f.unwrap_or(self.boost.a_f),
                }),
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.split_plan().validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::Config("the algorithm grid is empty".into()));
        }
        if self.twisters.is_empty() {
            return Err(Error::Config("the twister grid is empty".into()));
        }
        if !(1..=crate::trees::MAX_DEPTH).contains(&self.boost.tree_depth) {
            return Err(Error::Config(format!("tree_depth must be 1..=3, got {}", self.boost.tree_depth)));
        }
        for point in self.algorithm_points()? {
            let (algorithm, a_f) = match point {
                AlgorithmPoint::Fixed { algorithm, a_f } => (algorithm, a_f),
                AlgorithmPoint::Adaptive { a_f } => (Algorithm::PilBoost { alpha: 1.0 }, a_f),
            };
            self.boost_config(algorithm, a_f, 0).validate()?;
        }
        for t in &self.twisters {
            if t.levels.is_empty() {
                return Err(Error::Config(format!("twister '{}' has no levels", t.kind.name())));
            }
            for &l in &t.levels {
                t.kind.at_level(l).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    fn boost_config(&self, algorithm: Algorithm, a_f: f64, rng_seed: u64) -> BoostConfig {
        BoostConfig {
            iterations: self.boost.iterations,
            a_f,
            algorithm,
            tree_depth: self.boost.tree_depth,
            max_abs: self.boost.max_abs,
            rng_seed,
            diagnostics: self.diagnostics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub mean_zeta: Option<f64>,
    pub o1_fraction: f64,
    pub o2_fraction: f64,
    pub certificates_satisfied: usize,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub algorithm: String,
    pub alpha: Option<f64>,
    pub a_f: Option<f64>,
    pub twister: String,
    pub level: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// 95% t-interval half-width; absent with fewer than two folds.
    pub ci_half_width: Option<f64>,
    pub n: usize,
    pub feature_names: Vec<String>,
    /// Fold-averaged normalized importance profile.
    pub importance: Vec<f64>,
    /// Per-fold estimates of the adaptive variant.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise_estimates: Vec<NoiseEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSummary>,
    pub failures: Vec<String>,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub results: Vec<RunResult>,
    /// Full per-fit diagnostics, written to separate files.
    #[serde(skip)]
    pub fit_diagnostics: Vec<(String, usize, BoostDiagnostics)>,
}

/// `t_{0.975, n−1} · s / √n`; `None` for fewer than two values.
pub fn ci_half_width(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?.inverse_cdf(0.975);
    Some(t * var.sqrt() / (n as f64).sqrt())
}

#[derive(Default)]
struct Cell {
    accuracies: Vec<f64>,
    importance_sum: Vec<f64>,
    estimates: Vec<NoiseEstimate>,
    zetas: Vec<f64>,
    o1: usize,
    o2: usize,
    records: usize,
    certified: usize,
    diag_folds: usize,
    failures: Vec<String>,
}

/// Runs every (twister, level, algorithm) grid point over all folds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let ds = cfg.dataset.load(cfg.seed)?;
    let dataset_name = cfg.dataset.name();
    let plan = cfg.split_plan();
    let points = cfg.algorithm_points()?;
    let feature_names: Vec<String> = ds.schema().columns.iter().map(|c| c.name.clone()).collect();
    let mut results = Vec::new();
    let mut fit_diagnostics = Vec::new();

    for (ti, grid) in cfg.twisters.iter().enumerate() {
        for (li, &level) in grid.levels.iter().enumerate() {
            let mut cells: Vec<Cell> = points.iter().map(|_| Cell::default()).collect();
            for fold in 0..plan.folds {
                let (train_idx, test_idx) = split_indices(ds.m(), &plan, fold)?;
                debug_assert!(train_idx.iter().all(|i| !test_idx.contains(i)));
                let train = ds.subset(&train_idx);
                let test = ds.subset(&test_idx);
                let test_print = test.fingerprint();
                let twister = TwisterSpec {
                    kind: grid.kind.at_level(level)?,
                    seed: derive_seed(cfg.seed, &[3, ti as u64, li as u64, fold as u64]),
                };
                let twisted = match twister.apply(&train) {
                    Ok(t) => t,
                    Err(e) => {
                        for c in &mut cells {
                            c.failures.push(format!("fold {fold}: twister failed: {e}"));
                        }
                        continue;
                    }
                };
                for (pi, point) in points.iter().enumerate() {
                    let cell = &mut cells[pi];
                    let (algorithm, a_f) = match point {
                        AlgorithmPoint::Fixed { algorithm, a_f } => (*algorithm, *a_f),
                        AlgorithmPoint::Adaptive { a_f } => match estimate_noise(&twisted) {
                            Ok(est) => {
                                cell.estimates.push(est);
                                (Algorithm::PilBoost { alpha: est.alpha0 }, *a_f)
                            }
                            Err(e) => {
                                cell.failures.push(format!("fold {fold}: noise estimate failed: {e}"));
                                continue;
                            }
                        },
                    };
                    let bcfg = cfg.boost_config(algorithm, a_f, derive_seed(cfg.seed, &[4, fold as u64]));
                    let (ens, diag) = match fit(&twisted, &bcfg) {
                        Ok(r) => r,
                        Err(e) => {
                            cell.failures.push(format!("fold {fold}: fit failed: {e}"));
                            continue;
                        }
                    };
                    if test.fingerprint() != test_print {
                        return Err(Error::Precondition("test split changed during a fit".into()));
                    }
                    cell.accuracies.push(ens.accuracy(&test));
                    let imp = feature_importance(ens.members(), ds.d());
                    if cell.importance_sum.is_empty() {
                        cell.importance_sum = vec![0.0; ds.d()];
                    }
                    cell.importance_sum.iter_mut().zip(&imp).for_each(|(s, v)| *s += v);
                    if cfg.diagnostics {
                        summarize_diagnostics(cell, &diag, &algorithm)?;
                        let slug = run_slug(&dataset_name, &point.label(), grid.kind.name(), level);
                        fit_diagnostics.push((slug, fold, diag));
                    }
                }
            }
            for (point, cell) in points.iter().zip(cells) {
                results.push(finish_cell(&dataset_name, point, grid.kind.name(), level, &feature_names, cell));
            }
        }
    }
    results.sort_by(|a, b| {
        a.dataset
            .cmp(&b.dataset)
            .then_with(|| a.twister.cmp(&b.twister))
            .then_with(|| a.level.total_cmp(&b.level))
            .then_with(|| a.algorithm.cmp(&b.algorithm))
    });
    Ok(ExperimentOutput {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.name.clone(),
        seed: cfg.seed,
        results,
        fit_diagnostics,
    })
}

fn summarize_diagnostics(cell: &mut Cell, diag: &BoostDiagnostics, algorithm: &Algorithm) -> Result<()> {
    cell.diag_folds += 1;
    cell.records += diag.records.len();
    cell.zetas.extend(diag.records.iter().filter_map(|r| r.zeta));
    cell.o1 += diag.records.iter().filter(|r| r.o1).count();
    cell.o2 += diag.records.iter().filter(|r| r.o2).count();
    let surrogate = Surrogate::for_algorithm(*algorithm)?;
    let cert = convergence_certificate(
        diag,
        &surrogate,
        &CertificateParams {
            theta: 0.0,
            epsilon: 1.0,
            ..CertificateParams::default()
        },
    )?;
    cell.certified += usize::from(cert.satisfied);
    Ok(())
}

fn finish_cell(dataset: &str, point: &AlgorithmPoint, twister: &str, level: f64, names: &[String], cell: Cell) -> RunResult {
    let n = cell.accuracies.len();
    let mean = if n == 0 {
        f64::NAN
    } else {
        cell.accuracies.iter().sum::<f64>() / n as f64
    };
    let importance = if n == 0 {
        vec![0.0; names.len()]
    } else {
        cell.importance_sum.iter().map(|v| v / n as f64).collect()
    };
    let (alpha, a_f) = match point {
        AlgorithmPoint::Fixed {
            algorithm: Algorithm::AdaBoost,
            ..
        } => (None, None),
        AlgorithmPoint::Fixed {
            algorithm: Algorithm::PilBoost { alpha },
            a_f,
        } => (Some(*alpha), Some(*a_f)),
        AlgorithmPoint::Adaptive { a_f } => (None, Some(*a_f)),
    };
    let diagnostics = (cell.diag_folds > 0).then(|| DiagnosticsSummary {
        mean_zeta: (!cell.zetas.is_empty()).then(|| cell.zetas.iter().sum::<f64>() / cell.zetas.len() as f64),
        o1_fraction: cell.o1 as f64 / cell.records.max(1) as f64,
        o2_fraction: cell.o2 as f64 / cell.records.max(1) as f64,
        certificates_satisfied: cell.certified,
        folds: cell.diag_folds,
    });
    RunResult {
        dataset: dataset.into(),
        algorithm: point.label(),
        alpha,
        a_f,
        twister: twister.into(),
        level,
        mean,
        ci_half_width: ci_half_width(&cell.accuracies),
        n,
        fold_accuracies: cell.accuracies,
        feature_names: names.to_vec(),
        importance,
        noise_estimates: cell.estimates,
        diagnostics,
        partial: !cell.failures.is_empty(),
        failures: cell.failures,
    }
}

fn run_slug(dataset: &str, algorithm: &str, twister: &str, level: f64) -> String {
    let raw = format!("{dataset}_{algorithm}_{twister}_{level}");
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect::<String>()
        .replace("__", "_")
        .trim_matches('_')
        .to_string()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `results.json`, `curves.csv`, one importance CSV per run and, when
/// present, per-fit diagnostics. Returns the written paths.
pub fn emit_results(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    if out.results.is_empty() {
        return Err(Error::Precondition("no results to emit".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let results_path = dir.join(RESULTS_FILE);
    let mut json = serde_json::to_string_pretty(out)?;
    json.push('\n');
    write_file(&results_path, &json)?;
    written.push(results_path);

    let curves_path = dir.join(CURVES_FILE);
    let mut w = csv::Writer::from_path(&curves_path)?;
    w.write_record(CURVES_HEADER.split(','))?;
    for r in &out.results {
        let ci = r.ci_half_width.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([
            r.dataset.clone(),
            r.algorithm.clone(),
            r.twister.clone(),
            r.level.to_string(),
            r.mean.to_string(),
            ci,
            r.n.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&curves_path, e))?;
    written.push(curves_path);

    let imp_dir = dir.join("importance");
    fs::create_dir_all(&imp_dir).map_err(|e| Error::io(&imp_dir, e))?;
    for r in &out.results {
        let path = imp_dir.join(format!("{}.csv", run_slug(&r.dataset, &r.algorithm, &r.twister, r.level)));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["feature", "importance"])?;
        for (name, v) in r.feature_names.iter().zip(&r.importance) {
            w.write_record([name.clone(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    if !out.fit_diagnostics.is_empty() {
        let diag_dir = dir.join("diagnostics");
        fs::create_dir_all(&diag_dir).map_err(|e| Error::io(&diag_dir, e))?;
        for (slug, fold, diag) in &out.fit_diagnostics {
            let path = diag_dir.join(format!("{slug}_fold{fold}.json"));
            write_file(&path, &serde_json::to_string(diag)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Output directory precedence: explicit flag, config, environment, default.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Plain-text table of a run, one line per grid point.
pub fn summary_table(out: &ExperimentOutput) -> String {
    let mut s = String::new();
    let mut by_twist: BTreeMap<(String, String), Vec<&RunResult>> = BTreeMap::new();
    for r in &out.results {
        by_twist.entry((r.dataset.clone(), r.twister.clone())).or_default().push(r);
    }
    for ((ds, tw), rows) in by_twist {
        let _ = writeln!(s, "{ds} / {tw}");
        for r in rows {
            let ci = r.ci_half_width.map_or("-".to_string(), |c| format!("{c:.3}"));
            let flag = if r.partial { " (partial)" } else { "" };
            let _ = writeln!(
                s,
                "  level {:<6} {:<24} {:.3} ± {}  n={}{}",
                r.level, r.algorithm, r.mean, ci, r.n, flag
            );
        }
    }
    s
}

#[derive(Debug, Parser)]
#[command(name = "untwist", version, about = "α-loss boosting under twisted training data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a full experiment from a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Twist a dataset and write it as CSV.
    Twist {
        /// Dataset spec (TOML).
        dataset: PathBuf,
        /// Twister spec (TOML).
        twister: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "label")]
        label_column: String,
    },
    /// Estimate the label-noise rate and α₀ of a dataset.
    EstimateAlpha { dataset: PathBuf },
    /// Evaluate the convergence certificate of a saved diagnostics file.
    Certify {
        diagnostics: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        pi: Option<f64>,
        #[arg(long)]
        z_star: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
    },
    /// Print the α pseudo-inverse link next to the exact link, plus the gap report.
    Links {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code: 0 on success, 2 for usage or config errors, 1 otherwise.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = String::new();
    match dispatch(cli.command, &mut stdout) {
        Ok(()) => {
            print!("{stdout}");
            0
        }
        Err(e) => {
            print!("{stdout}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut String) -> Result<()> {
    match cmd {
        Command::Run { config, output_dir } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let result = run_experiment(&cfg)?;
            let dir = resolve_output_dir(output_dir.as_deref(), &cfg);
            let files = emit_results(&result, &dir)?;
            out.push_str(&summary_table(&result));
            let _ = writeln!(out, "wrote {} files to {}", files.len(), dir.display());
        }
        Command::Twist {
            dataset,
            twister,
            output,
            label_column,
        } => {
            let ds = DatasetSpec::from_file(&dataset)?.load(0)?;
            let text = fs::read_to_string(&twister).map_err(|e| Error::io(&twister, e))?;
            let spec: TwisterSpec =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", twister.display())))?;
            let twisted = spec.apply(&ds)?;
            match output {
                Some(p) => {
                    write_csv(&twisted, &p, &label_column)?;
                    let _ = writeln!(out, "wrote {} rows to {}", twisted.m(), p.display());
                }
                None => {
                    let tmp = tempfile_path();
                    write_csv(&twisted, &tmp, &label_column)?;
                    let body = fs::read_to_string(&tmp).map_err(|e| Error::io(&tmp, e))?;
                    let _ = fs::remove_file(&tmp);
                    out.push_str(&body);
                }
            }
        }
        Command::EstimateAlpha { dataset } => {
            let ds = DatasetSpec::from_file(&dataset)?.load(0)?;
            let est = estimate_noise(&ds)?;
            let _ = writeln!(out, "eta_min={}", est.eta_min);
            let _ = writeln!(out, "eta_max={}", est.eta_max);
            let _ = writeln!(out, "p_hat={}", est.p_hat);
            let _ = writeln!(out, "eta_c_avg={}", est.eta_c_avg);
            let _ = writeln!(out, "alpha0={:.1}", est.alpha0);
        }
        Command::Certify {
            diagnostics,
            gamma,
            zeta,
            pi,
            z_star,
            theta,
            epsilon,
        } => {
            let text = fs::read_to_string(&diagnostics).map_err(|e| Error::io(&diagnostics, e))?;
            let diag: BoostDiagnostics = serde_json::from_str(&text)?;
            let surrogate = Surrogate::for_algorithm(diag.algorithm)?;
            let params = CertificateParams {
                gamma,
                zeta,
                pi,
                z_star,
                theta,
                epsilon,
            };
            let cert = convergence_certificate(&diag, &surrogate, &params)?;
            out.push_str(&serde_json::to_string_pretty(&cert)?);
            out.push('\n');
        }
        Command::Links { alpha, points } => {
            let a = AlphaParam::new(alpha)?;
            let table = PilTable::new(a)?;
            let ap = a.conjugate();
            let n = points.max(2);
            let _ = writeln!(out, "z,pil,exact");
            for k in 0..n {
                let z = -1.5 * ap + 3.0 * ap * k as f64 / (n - 1) as f64;
                let _ = writeln!(out, "{z},{},{}", table.eval(z), exact_inverse_link(a, z)?);
            }
            if alpha >= 1.2 {
                let grid: Vec<f64> = (0..=2000).map(|k| -1.5 * ap + 3.0 * ap * k as f64 / 2000.0).collect();
                let r = pil_gap_report(a, &grid)?;
                let _ = writeln!(
                    out,
                    "max gap {} outside |z| in [{}, {}] ({} points, {} skipped)",
                    r.max_horizontal_gap, r.forbidden_interval.0, r.forbidden_interval.1, r.evaluated, r.skipped
                );
            }
        }
    }
    Ok(())
}

fn tempfile_path() -> PathBuf {
    std::env::temp_dir().join(format!("untwist-twist-{}.csv", std::process::id()))
}
