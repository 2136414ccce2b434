use std::io;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use rkan_core::experiments::{
    gradient_suite, solve_elliptic_pde, solve_lane_emden, train_regression, OdeTask, PdeTask, RegressionTask,
    RunStatus, TrainReport,
};
use rkan_core::layers::LayerKind;

use crate::config::{ExperimentConfig, ExperimentKind};

/// Gradient checks count as passing below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
const GRADCHECK_DEGREE: usize = 3;
const GRADCHECK_DEN_DEGREE: usize = 2;

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub layer: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: Option<usize>,
    pub mapping: String,
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub root: Option<f64>,
    pub root_err: Option<f64>,
    pub max_abs_err: Option<f64>,
    pub wall_s: f64,
    pub status: String,
}

pub const HEADER: [&str; 13] = [
    "experiment",
    "seed",
    "layer",
    "K",
    "p",
    "mapping",
    "train_mse",
    "test_mse",
    "root",
    "root_err",
    "max_abs_err",
    "wall_s",
    "status",
];

impl ResultRow {
    fn blank(cfg: &ExperimentConfig, seed: u64) -> Self {
        let n = &cfg.network;
        Self {
            experiment: cfg.kind.name().to_string(),
            seed,
            layer: n.layer.name().to_string(),
            k: n.degree,
            p: n.layer.is_pade().then_some(n.den_degree),
            mapping: n.mapping.name().to_string(),
            train_mse: None,
            test_mse: None,
            root: None,
            root_err: None,
            max_abs_err: None,
            wall_s: 0.0,
            status: RunStatus::Failed.name().to_string(),
        }
    }

    fn fill(&mut self, r: &TrainReport) {
        self.train_mse = r.train_mse;
        self.test_mse = r.test_mse;
        self.root = r.root;
        self.root_err = r.root_err;
        self.max_abs_err = r.max_abs_err;
        self.status = r.status.name().to_string();
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok.name()
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Vec<ResultRow> {
    let start = Instant::now();
    let mut row = ResultRow::blank(cfg, seed);
    let report = match cfg.kind {
        ExperimentKind::Regression => {
            let target = cfg.target.expect("validated by parse_config");
            train_regression(&RegressionTask::new(target, seed), &cfg.network, &cfg.optimizer)
        }
        ExperimentKind::LaneEmden => {
            let task = OdeTask::new(cfg.w.expect("validated by parse_config"));
            solve_lane_emden(&task, &cfg.network, &cfg.optimizer, seed)
        }
        ExperimentKind::EllipticPde => solve_elliptic_pde(&PdeTask::default(), &cfg.network, &cfg.optimizer, seed),
        ExperimentKind::Gradcheck => match gradcheck_rows(seed, start) {
            Ok(rows) => return rows,
            Err(e) => Err(e),
        },
    };
    match report {
        Ok(r) => row.fill(&r),
        Err(e) => eprintln!("{} seed {seed}: {e}", cfg.kind.name()),
    }
    row.wall_s = start.elapsed().as_secs_f64();
    vec![row]
}

// One row per rational layer kind holding the worst relative error over
// both network modes.
fn gradcheck_rows(seed: u64, start: Instant) -> rkan_core::Result<Vec<ResultRow>> {
    let suite = gradient_suite(seed)?;
    let wall = start.elapsed().as_secs_f64();
    Ok(LayerKind::RATIONAL
        .iter()
        .map(|&kind| {
            let checks: Vec<_> = suite.iter().filter(|(k, _, _)| *k == kind).map(|(_, _, r)| r).collect();
            let worst = checks.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
            let ok = checks.iter().all(|r| r.passes(GRADCHECK_TOLERANCE));
            ResultRow {
                experiment: ExperimentKind::Gradcheck.name().to_string(),
                seed,
                layer: kind.name().to_string(),
                k: GRADCHECK_DEGREE,
                p: kind.is_pade().then_some(GRADCHECK_DEN_DEGREE),
                mapping: kind.default_mapping().name().to_string(),
                train_mse: None,
                test_mse: None,
                root: None,
                root_err: None,
                max_abs_err: Some(worst),
                wall_s: wall,
                status: if ok { RunStatus::Ok } else { RunStatus::Failed }.name().to_string(),
            }
        })
        .collect())
}

/// Run every seed of `cfg`, on `threads` workers when more than one.
/// Rows come back in seed order whatever the scheduling.
pub fn run(cfg: &ExperimentConfig, threads: usize) -> Vec<ResultRow> {
    if threads <= 1 {
        return cfg.seeds.iter().flat_map(|&s| run_seed(cfg, s)).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| run_seed(cfg, s))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    })
}

pub fn write_rows<W: io::Write>(w: W, rows: &[ResultRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(HEADER)?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: io::Read>(r: R) -> csv::Result<Vec<ResultRow>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> csv::Result<()> {
    write_rows(std::fs::File::create(path)?, rows)
}

pub fn read_csv(path: &Path) -> csv::Result<Vec<ResultRow>> {
    read_rows(std::fs::File::open(path)?)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// The headline metric of an experiment kind and its value on a row.
pub fn headline(kind: ExperimentKind) -> (&'static str, fn(&ResultRow) -> Option<f64>) {
    match kind {
        ExperimentKind::Regression => ("test_mse", |r| r.test_mse),
        ExperimentKind::LaneEmden => ("root_err", |r| r.root_err),
        ExperimentKind::EllipticPde | ExperimentKind::Gradcheck => ("max_abs_err", |r| r.max_abs_err),
    }
}

/// Median of the headline metric over rows that report it.
pub fn median_headline(kind: ExperimentKind, rows: &[ResultRow]) -> Option<f64> {
    let (_, get) = headline(kind);
    median(rows.iter().filter_map(get).filter(|v| v.is_finite()).collect())
}

pub fn summary(cfg: &ExperimentConfig, rows: &[ResultRow]) -> String {
    let (name, _) = headline(cfg.kind);
    let ok = rows.iter().filter(|r| r.is_ok()).count();
    let med = median_headline(cfg.kind, rows).map_or("n/a".to_string(), |v| format!("{v:.3e}"));
    let what = match (cfg.kind, cfg.target, cfg.w) {
        (ExperimentKind::Regression, Some(t), _) => format!("regression {t}"),
        (ExperimentKind::LaneEmden, _, Some(w)) => format!("lane-emden w={w}"),
        (ExperimentKind::Gradcheck, _, _) => {
            return format!("gradcheck: median {name} {med} over {} rows ({ok} ok)", rows.len());
        }
        (k, _, _) => k.name().to_string(),
    };
    format!(
        "{what} {} K={}: median {name} {med} over {} rows ({ok} ok)",
        cfg.network.layer,
        cfg.network.degree,
        rows.len()
    )
}
