use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sgs::metrics::{DiagramDistance, FrechetSum, TotalPersistence};
use sgs::objectives::{
    alternating_template_filter, noisy_circle_filter, synthetic_bootstrap, CreaseToy, PersistenceObjective,
    Regularized, FRECHET_DIRECTIONS,
};
use sgs::optim::{
    baseline_run, sgs_run, BaselineConfig, BaselineMode, OptimizerTrace, SgsConfig, StratifiedObjective, Termination,
};
use sgs::persistence::PersistenceSpec;
use sgs::{Barcode, FilterVector, SimplicialComplex};

use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fig1,
    TotalPers,
    Registration,
    Frechet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    #[serde(rename = "SGS")]
    Sgs,
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "GDwD")]
    GdWithDecay,
    #[serde(rename = "GS")]
    Gs,
}

/// Registration target: a diagram file, a filtered complex, or the built-in noisy circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum TargetSpec {
    Diagram { diagram: PathBuf },
    Filtered { complex: PathBuf, filter: PathBuf },
    Circle {
        #[serde(default = "default_circle_vertices")]
        vertices: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_circle_vertices() -> usize {
    120
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapParams {
    pub loop_vertices: usize,
    pub spurs: usize,
    pub copies: usize,
    pub keep: f64,
    pub seed: u64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self {
            loop_vertices: 16,
            spurs: 5,
            copies: 10,
            keep: 0.3,
            seed: 0,
        }
    }
}

fn default_q() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub optimizer: SgsConfig,
    /// Samples per gradient-sampling iteration; defaults to dimension + 1.
    #[serde(default)]
    pub gs_samples: Option<usize>,
    /// Starting point; overrides `filter`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Complex for total persistence, or the registration template.
    #[serde(default)]
    pub complex: Option<PathBuf>,
    /// Starting filter file.
    #[serde(default)]
    pub filter: Option<PathBuf>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    /// Vertices of the cycle template when no template complex is given.
    #[serde(default)]
    pub template_vertices: Option<usize>,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub max_degree: Option<usize>,
    /// Projection angles for the Fréchet experiment.
    #[serde(default)]
    pub directions: Option<Vec<f64>>,
    #[serde(default)]
    pub bootstrap: BootstrapParams,
    /// Weight of an added `lambda ‖x‖²` term.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub save_diagrams: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.complex.as_mut().map(resolve);
        cfg.filter.as_mut().map(resolve);
        match &mut cfg.target {
            Some(TargetSpec::Diagram { diagram }) => resolve(diagram),
            Some(TargetSpec::Filtered { complex, filter }) => {
                resolve(complex);
                resolve(filter);
            }
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if !(self.q >= 1.0 && self.q.is_finite()) {
            bail!("InvalidExponent: q must be finite and >= 1, got {}", self.q);
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            bail!("lambda must be >= 0, got {}", self.lambda);
        }
        for p in [&self.complex, &self.filter].into_iter().flatten() {
            if !p.exists() {
                bail!("referenced file {} does not exist", p.display());
            }
        }
        if self.experiment == Experiment::Registration && self.template_vertices.is_some_and(|n| n < 3) {
            bail!("template_vertices must be at least 3");
        }
        if self.experiment != Experiment::Frechet && self.directions.is_some() {
            bail!("directions only apply to the frechet experiment");
        }
        Ok(())
    }
}

/// One optimization problem ready to run.
struct Problem {
    label: String,
    objective: Box<dyn StratifiedObjective>,
    x0: Vec<f64>,
    diagram: Option<(SimplicialComplex, PersistenceSpec)>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub termination: Termination,
    pub iterations: usize,
    pub initial_f: f64,
    pub final_f: f64,
    pub final_g_norm: f64,
}

fn regularize(obj: Box<dyn StratifiedObjective>, lambda: f64) -> Box<dyn StratifiedObjective> {
    if lambda > 0.0 {
        Box::new(Regularized::new(obj, lambda))
    } else {
        obj
    }
}

fn start_point(cfg: &ExperimentConfig, fallback: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>> {
    if let Some(x) = &cfg.x0 {
        return Ok(FilterVector::new(x.clone())?.into_inner());
    }
    if let Some(p) = &cfg.filter {
        return Ok(io::read_filter(p)?.into_inner());
    }
    Ok(fallback())
}

fn check_len(x0: &[f64], n: usize) -> Result<()> {
    if x0.len() != n {
        bail!("LengthMismatch: starting filter has {} values, expected {n}", x0.len());
    }
    Ok(())
}

fn build(cfg: &ExperimentConfig) -> Result<Vec<Problem>> {
    match cfg.experiment {
        Experiment::Fig1 => {
            let x0 = start_point(cfg, || vec![0.8, 0.8])?;
            check_len(&x0, 2)?;
            Ok(vec![Problem {
                label: "fig1".into(),
                objective: regularize(Box::new(CreaseToy), cfg.lambda),
                x0,
                diagram: None,
            }])
        }
        Experiment::TotalPers => {
            let complex = match &cfg.complex {
                Some(p) => io::read_complex(p)?,
                None => SimplicialComplex::path(5),
            };
            let x0 = start_point(cfg, || vec![0.4, 0.72, 0.0, 0.3, 0.14])?;
            check_len(&x0, complex.n_vertices())?;
            let spec = PersistenceSpec::extended(cfg.max_degree.unwrap_or(0));
            let obj = PersistenceObjective::new(complex.clone(), spec, TotalPersistence)?;
            Ok(vec![Problem {
                label: "total-pers".into(),
                objective: regularize(Box::new(obj), cfg.lambda),
                x0,
                diagram: Some((complex, spec)),
            }])
        }
        Experiment::Registration => {
            let spec = PersistenceSpec::extended(cfg.max_degree.unwrap_or(0));
            let target = match cfg.target.clone().unwrap_or(TargetSpec::Circle {
                vertices: default_circle_vertices(),
                noise: default_noise(),
                seed: 0,
            }) {
                TargetSpec::Diagram { diagram } => io::read_diagram(&diagram)?,
                TargetSpec::Filtered { complex, filter } => {
                    let k = io::read_complex(&complex)?;
                    let f = io::read_filter(&filter)?;
                    spec.barcode(&k, &f)?
                }
                TargetSpec::Circle { vertices, noise, seed } => {
                    if vertices < 3 {
                        bail!("circle target needs at least 3 vertices");
                    }
                    let f = FilterVector::new(noisy_circle_filter(vertices, noise, seed))?;
                    spec.barcode(&SimplicialComplex::cycle(vertices), &f)?
                }
            };
            let template = match &cfg.complex {
                Some(p) => io::read_complex(p)?,
                None => SimplicialComplex::cycle(cfg.template_vertices.unwrap_or(4)),
            };
            let n = template.n_vertices();
            let x0 = start_point(cfg, || alternating_template_filter(n, cfg.optimizer.seed))?;
            check_len(&x0, n)?;
            let loss = DiagramDistance::new(target, cfg.q)?;
            let obj = PersistenceObjective::new(template.clone(), spec, loss)?;
            Ok(vec![Problem {
                label: "registration".into(),
                objective: regularize(Box::new(obj), cfg.lambda),
                x0,
                diagram: Some((template, spec)),
            }])
        }
        Experiment::Frechet => {
            let b = &cfg.bootstrap;
            let family = synthetic_bootstrap(b.loop_vertices, b.spurs, b.copies, b.keep, b.seed);
            let spec = PersistenceSpec::extended(cfg.max_degree.unwrap_or(1));
            let directions = cfg.directions.clone().unwrap_or(FRECHET_DIRECTIONS.to_vec());
            directions
                .iter()
                .enumerate()
                .map(|(j, &angle)| {
                    let targets = family
                        .copies
                        .iter()
                        .map(|c| spec.barcode(&c.complex, &FilterVector::new(c.projection(angle))?))
                        .collect::<Result<Vec<Barcode>, _>>()?;
                    let obj = PersistenceObjective::new(family.base.complex.clone(), spec, FrechetSum::new(targets)?)?;
                    Ok(Problem {
                        label: format!("frechet-{j}"),
                        objective: regularize(Box::new(obj), cfg.lambda),
                        x0: family.base.projection(angle),
                        diagram: Some((family.base.complex.clone(), spec)),
                    })
                })
                .collect()
        }
    }
}

fn run_one(cfg: &ExperimentConfig, p: &Problem) -> Result<OptimizerTrace> {
    let trace = match cfg.mode {
        Mode::Sgs => sgs_run(&p.objective, &p.x0, &cfg.optimizer)?,
        baseline => {
            let o = &cfg.optimizer;
            let bc = BaselineConfig {
                eps: o.eps,
                eta: o.eta,
                beta: o.beta,
                gamma: o.gamma,
                max_iters: o.max_iters,
                seed: o.seed,
                samples: cfg.gs_samples,
                max_rounds: o.max_rounds,
                mnp_tol: o.mnp_tol,
                timing: o.timing,
                ..BaselineConfig::default()
            };
            let mode = match baseline {
                Mode::Gd => BaselineMode::Gd,
                Mode::GdWithDecay => BaselineMode::GdWithDecay,
                _ => BaselineMode::GradientSampling,
            };
            baseline_run(&p.objective, &p.x0, mode, &bc)?
        }
    };
    Ok(trace)
}

/// Runs every problem of the experiment and writes its outputs into `out`.
/// Returns whether every run reached the gradient threshold.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<(bool, Vec<RunSummary>)> {
    let problems = build(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let single = problems.len() == 1;
    let mut summaries = Vec::new();
    for p in &problems {
        let trace = run_one(cfg, p)?;
        let suffix = if single { String::new() } else { format!("_{}", p.label) };
        io::write_trace(&out.join(format!("trace{suffix}.csv")), &trace)?;
        io::write_json(&out.join(format!("final_filter{suffix}.json")), &trace.final_x)?;
        if cfg.save_diagrams {
            if let Some((complex, spec)) = &p.diagram {
                let diagrams = trace
                    .records
                    .iter()
                    .map(|r| &r.x)
                    .chain(std::iter::once(&trace.final_x))
                    .map(|x| spec.barcode(complex, &FilterVector::new(x.clone())?))
                    .collect::<Result<Vec<Barcode>, _>>()?;
                io::write_json(&out.join(format!("diagrams{suffix}.json")), &diagrams)?;
            }
        }
        summaries.push(RunSummary {
            label: p.label.clone(),
            termination: trace.termination,
            iterations: trace.iterations(),
            initial_f: trace.records.first().map_or(trace.final_f, |r| r.f),
            final_f: trace.final_f,
            final_g_norm: trace.records.last().map_or(f64::NAN, |r| r.g_norm),
        });
    }
    io::write_json(&out.join("summary.json"), &summaries)?;
    let ok = summaries.iter().all(|s| s.termination == Termination::GradientBelowEta);
    Ok((ok, summaries))
}
