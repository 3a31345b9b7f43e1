//! The simulation studies: closed-form data-generating processes on a grid,
//! effects with NLMs, effect trees and plot-ready output files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StepVector};
use crate::effects::{fme_batch, EffectTable};
use crate::error::{Error, Result};
use crate::extrapolation::Envelope;
use crate::nonlinearity::{attach_nlm, DEFAULT_SUBINTERVALS};
use crate::predictors::{dgp, KernelRidge, KrrParams, DGP_DOMAIN};
use crate::subspace::{fit_effect_tree, PartitionTree, TreeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    UnivariateNoiseless,
    UnivariateNoisy,
    BivariateAdditiveUniStep,
    BivariateMultiplicativeUniStep,
    BivariateAdditiveBiStep,
    BivariateMultiplicativeBiStep,
}

pub const SCENARIO_NAMES: [&str; 6] = [
    "univariate_noiseless",
    "univariate_noisy",
    "bivariate_additive_uni_step",
    "bivariate_multiplicative_uni_step",
    "bivariate_additive_bi_step",
    "bivariate_multiplicative_bi_step",
];

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::UnivariateNoiseless,
        ScenarioName::UnivariateNoisy,
        ScenarioName::BivariateAdditiveUniStep,
        ScenarioName::BivariateMultiplicativeUniStep,
        ScenarioName::BivariateAdditiveBiStep,
        ScenarioName::BivariateMultiplicativeBiStep,
    ];

    pub fn as_str(self) -> &'static str {
        SCENARIO_NAMES[ScenarioName::ALL.iter().position(|&n| n == self).expect("listed")]
    }

    pub fn is_univariate(self) -> bool {
        matches!(self, ScenarioName::UnivariateNoiseless | ScenarioName::UnivariateNoisy)
    }

    fn dgp_name(self) -> &'static str {
        match self {
            ScenarioName::UnivariateNoiseless | ScenarioName::UnivariateNoisy => "univariate",
            ScenarioName::BivariateAdditiveUniStep | ScenarioName::BivariateAdditiveBiStep => "bivariate_additive",
            _ => "bivariate_multiplicative",
        }
    }

    fn bi_step(self) -> bool {
        matches!(self, ScenarioName::BivariateAdditiveBiStep | ScenarioName::BivariateMultiplicativeBiStep)
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SCENARIO_NAMES.iter().position(|&n| n == s).map(|i| ScenarioName::ALL[i]).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown scenario {s:?}; registered: {}", SCENARIO_NAMES.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    /// Grid points per axis on the simulation domain.
    pub grid: usize,
    pub seed: u64,
    /// Standard deviation of the target noise in the noisy scenario.
    pub noise_sd: f64,
    pub h1: f64,
    /// Step in `x2` for the bivariate-step scenarios.
    pub h2: f64,
    pub subintervals: usize,
    pub tree: TreeParams,
}

impl ScenarioSpec {
    pub fn new(name: ScenarioName) -> Self {
        ScenarioSpec {
            name,
            grid: 101,
            seed: 0,
            noise_sd: 1.0,
            h1: 2.0,
            h2: 3.0,
            subintervals: DEFAULT_SUBINTERVALS,
            tree: TreeParams::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.tree.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2 points per axis, got {}", self.grid)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise_sd must be non-negative, got {}", self.noise_sd)));
        }
        Ok(())
    }

    fn step(&self) -> Result<StepVector> {
        if self.name.is_univariate() {
            StepVector::shift("x", self.h1)
        } else if self.name.bi_step() {
            StepVector::shifts([("x1", self.h1), ("x2", self.h2)])
        } else {
            StepVector::shift("x1", self.h1)
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    /// Anchors the effects were computed for.
    pub data: Dataset,
    /// Effects with NLMs attached.
    pub table: EffectTable,
    pub tree: PartitionTree,
    /// fMEs of the data-generating process at the kept anchors, for the
    /// scenario that explains a fitted model.
    pub dgp_fme: Option<Vec<f64>>,
}

fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn grid_data(spec: &ScenarioSpec) -> Result<Dataset> {
    let (lo, hi) = DGP_DOMAIN;
    let a = axis(spec.grid, lo, hi);
    if spec.name.is_univariate() {
        Dataset::from_numeric(&["x"], &a.iter().map(|v| vec![*v]).collect::<Vec<_>>())
    } else {
        let rows: Vec<Vec<f64>> = a.iter().flat_map(|&x1| a.iter().map(move |&x2| vec![x1, x2])).collect();
        Dataset::from_numeric(&["x1", "x2"], &rows)
    }
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioResult> {
    spec.validate()?;
    let step = spec.step()?;
    let truth = dgp(spec.name.dgp_name())?;
    let grid = grid_data(spec)?;

    let (table, dgp_fme) = if spec.name == ScenarioName::UnivariateNoisy {
        let normal = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let y: Vec<f64> = grid
            .rows()
            .iter()
            .map(|r| truth.eval(&[r[0].as_f64().expect("numeric")]) + normal.sample(&mut rng))
            .collect();
        let model = KernelRidge::fit(&grid, &y, &KrrParams::default())?;
        let envelope = Envelope::from_dataset(&grid)?;
        let mut table = fme_batch(&model, &grid, &step, Some(&envelope))?;
        table.exclude_forward_ep();
        attach_nlm(&model, &mut table, spec.subintervals)?;
        let truth_fme = fme_batch(&truth, &grid, &step, None)?;
        let dgp_fme = table.records.iter().map(|r| truth_fme.records[r.row].fme).collect();
        (table, Some(dgp_fme))
    } else {
        let mut table = fme_batch(&truth, &grid, &step, None)?;
        attach_nlm(&truth, &mut table, spec.subintervals)?;
        (table, None)
    };

    let tree = fit_effect_tree(&grid, &table, &spec.tree)?;
    Ok(ScenarioResult { spec: spec.clone(), data: grid, table, tree, dgp_fme })
}

/// Runs independent scenarios in parallel, results in input order.
pub fn run_scenarios(specs: &[ScenarioSpec]) -> Vec<Result<ScenarioResult>> {
    specs.par_iter().map(run_scenario).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/<name>/effects.csv`, `tree.json` and `leaves.csv`.
pub fn emit_plot_data(result: &ScenarioResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out = dir.as_ref().join(result.spec.name.as_str());
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let leaf_of: std::collections::HashMap<usize, usize> = result.tree.leaf_assignment().into_iter().collect();
    let mut effects = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = result.data.names();
    header.extend(["fme", "nlm", "leaf", "came"]);
    effects.write_record(&header)?;
    for r in &result.table.records {
        let leaf = leaf_of[&r.row];
        let mut line: Vec<String> = r.anchor.iter().map(|v| v.to_string()).collect();
        line.push(r.fme.to_string());
        line.push(r.nlm.as_ref().and_then(|n| n.nlm).map(|v| v.to_string()).unwrap_or_default());
        line.push(leaf.to_string());
        line.push(result.tree.nodes()[leaf].summary.came.to_string());
        effects.write_record(&line)?;
    }
    let effects = effects.into_inner().map_err(|e| Error::io(&out, e.into_error()))?;

    let mut tree = Vec::new();
    result.tree.write_json(&mut tree)?;
    let mut leaves = Vec::new();
    result.tree.write_leaves_csv(&mut leaves)?;

    let files = [("effects.csv", effects), ("tree.json", tree), ("leaves.csv", leaves)];
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let path = out.join(name);
        write_file(&path, &bytes)?;
        paths.push(path);
    }
    Ok(paths)
}
