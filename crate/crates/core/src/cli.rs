//! Experiment configs, command dispatch and deterministic output files.
//!
//! Every command is described by an [`ExperimentConfig`]. The binary builds
//! one from a JSON file and command-line flags, and [`run`] validates it
//! completely before computing anything. Outputs are CSV files whose first
//! line carries the provenance block, each with a JSON sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cameron_martin::CMOperator;
use crate::error::{Error, Result};
use crate::fbm::{sample_fbm, HurstParam, SamplingMethod};
use crate::grid::{Path, TimeGrid};
use crate::mdp::{
    action_with_q, assemble_q, assemble_q_kernel, check_invertibility, discontinuity_gap,
    invert_q_direct, invert_q_explicit, ActionInput,
};
use crate::models::{ModelConfig, ModelSpec};
use crate::operator::OperatorMatrix;
use crate::simulate::{check_scaling_ladder, ensemble_ladder, solve_averaged, HScaling, SimConfig, Statistic};
use crate::table::{config_hash, write_sidecar, Cell, Provenance, ResultTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SampleFbm,
    Simulate,
    Average,
    AssembleKdot,
    AssembleQ,
    InvertQ,
    Action,
    Discontinuity,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SampleFbm => "sample-fbm",
            Command::Simulate => "simulate",
            Command::Average => "average",
            Command::AssembleKdot => "assemble-kdot",
            Command::AssembleQ => "assemble-q",
            Command::InvertQ => "invert-q",
            Command::Action => "action",
            Command::Discontinuity => "discontinuity",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvertMode {
    #[default]
    Direct,
    Explicit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QRoute {
    #[default]
    Composition,
    Kernel,
}

/// Closed-form input paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    One,
    Linear,
    Square,
    /// `t sin(πt)`
    SinT,
}

impl Builtin {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Builtin::One => 1.0,
            Builtin::Linear => t,
            Builtin::Square => t * t,
            Builtin::SinT => t * (std::f64::consts::PI * t).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathSource {
    /// Path CSV in the `t,v0,...` format.
    File(PathBuf),
    Builtin(Builtin),
}

impl PathSource {
    fn load(&self, steps: Option<usize>, dim: usize) -> Result<Path> {
        match self {
            PathSource::File(p) => {
                let file = fs::File::open(p)
                    .map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))?;
                Path::read_csv(file)
            }
            PathSource::Builtin(b) => {
                let grid = TimeGrid::new(steps.ok_or_else(|| missing("steps"))?)?;
                let comps = vec![grid.nodes().iter().map(|t| b.eval(*t)).collect::<Vec<_>>(); dim];
                Path::from_components(grid, &comps)
            }
        }
    }

    fn file_bytes(&self) -> Result<Vec<u8>> {
        match self {
            PathSource::File(p) => {
                fs::read(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
            }
            PathSource::Builtin(_) => Ok(Vec::new()),
        }
    }
}

/// Full description of one run. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub hurst: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub epsilon_ladder: Option<Vec<f64>>,
    #[serde(default)]
    pub paths: Option<usize>,
    #[serde(default)]
    pub statistic: Option<Statistic>,
    #[serde(default)]
    pub h_scaling: Option<HScaling>,
    #[serde(default)]
    pub hurst_ladder: Option<Vec<f64>>,
    #[serde(default)]
    pub method: Option<SamplingMethod>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub mode: Option<InvertMode>,
    #[serde(default)]
    pub route: Option<QRoute>,
    #[serde(default)]
    pub psi: Option<PathSource>,
    #[serde(default)]
    pub phi: Option<PathSource>,
    #[serde(default)]
    pub half: Option<bool>,
}

fn missing(field: &str) -> Error {
    Error::Config(format!("missing required field `{field}`"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn from_file(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Hash of the canonical JSON form plus the bytes of every input file.
    pub fn hash(&self) -> Result<String> {
        let mut bytes = serde_json::to_vec(self)?;
        for src in [&self.psi, &self.phi].into_iter().flatten() {
            bytes.extend(src.file_bytes()?);
        }
        Ok(config_hash(&bytes))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn model(&self) -> Result<ModelSpec> {
        self.model.as_ref().ok_or_else(|| missing("model"))?.build()
    }

    fn steps(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.steps.ok_or_else(|| missing("steps"))?)
    }

    fn operator_hurst(&self) -> Result<HurstParam> {
        HurstParam::operator(self.hurst.ok_or_else(|| missing("hurst"))?)
    }

    fn forbid(&self, fields: &[(&str, bool)]) -> Result<()> {
        for (name, present) in fields {
            if *present {
                return Err(Error::Config(format!(
                    "field `{name}` does not apply to `{}`",
                    self.command.map_or("?", Command::name)
                )));
            }
        }
        Ok(())
    }

    /// Checks every field the command needs and builds the typed plan.
    pub fn validate(&self) -> Result<Plan> {
        let command = self.command.ok_or_else(|| missing("command"))?;
        let plan = match command {
            Command::SampleFbm => {
                self.forbid(&[("model", self.model.is_some())])?;
                let dim = self.dim.unwrap_or(1);
                if dim == 0 {
                    return Err(Error::Config("`dim` must be positive".into()));
                }
                Plan::SampleFbm {
                    hurst: HurstParam::sampling(self.hurst.ok_or_else(|| missing("hurst"))?)?,
                    grid: self.steps()?,
                    dim,
                    method: self.method.unwrap_or_default(),
                }
            }
            Command::Simulate => {
                let model = self.model()?;
                let hurst = self.operator_hurst()?;
                let ladder = self.epsilon_ladder.clone().ok_or_else(|| missing("epsilon_ladder"))?;
                if ladder.is_empty() || ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(Error::Config("`epsilon_ladder` needs positive values".into()));
                }
                let scaling = self.h_scaling.unwrap_or_default();
                scaling.validate()?;
                let paths = self.paths.ok_or_else(|| missing("paths"))?;
                if paths == 0 {
                    return Err(Error::Config("`paths` must be positive".into()));
                }
                if let Some(Statistic::Exceedance { level }) = self.statistic {
                    if level.is_nan() {
                        return Err(Error::Config("exceedance level is NaN".into()));
                    }
                }
                let mut grids = Vec::new();
                for eps in &ladder {
                    let n = match self.steps {
                        Some(n) => n,
                        None => resolved_steps(*eps),
                    };
                    grids.push((*eps, TimeGrid::new(n)?));
                }
                Plan::Simulate {
                    model,
                    hurst,
                    ladder: grids,
                    paths,
                    statistic: self.statistic.unwrap_or(Statistic::SupDeviation),
                    scaling,
                }
            }
            Command::Average => Plan::Average {
                model: self.model()?,
                grid: self.steps()?,
            },
            Command::AssembleKdot => {
                self.forbid(&[("model", self.model.is_some())])?;
                Plan::AssembleKdot {
                    hurst: self.operator_hurst()?,
                    grid: self.steps()?,
                }
            }
            Command::AssembleQ => Plan::AssembleQ {
                model: self.model()?,
                hurst: self.operator_hurst()?,
                grid: self.steps()?,
                route: self.route.unwrap_or_default(),
            },
            Command::InvertQ => {
                let model = self.model()?;
                let mode = self.mode.unwrap_or_default();
                let hurst = match mode {
                    InvertMode::Direct => self.operator_hurst()?,
                    InvertMode::Explicit => {
                        HurstParam::explicit_inverse(self.hurst.ok_or_else(|| missing("hurst"))?)?
                    }
                };
                let psi = self
                    .psi
                    .clone()
                    .unwrap_or(PathSource::Builtin(Builtin::One))
                    .load(self.steps, model.n)?;
                if psi.dim() != model.n {
                    return Err(Error::DimensionMismatch {
                        expected: model.n,
                        got: psi.dim(),
                    });
                }
                Plan::InvertQ {
                    model,
                    hurst,
                    mode,
                    psi,
                }
            }
            Command::Action => {
                let model = self.model()?;
                let phi = self.phi.as_ref().ok_or_else(|| missing("phi"))?.load(self.steps, model.n)?;
                if phi.dim() != model.n {
                    return Err(Error::DimensionMismatch {
                        expected: model.n,
                        got: phi.dim(),
                    });
                }
                if phi.at(0).iter().any(|v| v.abs() > 1e-12) {
                    return Err(Error::Config("`phi` must start at 0".into()));
                }
                Plan::Action {
                    model,
                    hurst: self.operator_hurst()?,
                    phi,
                    half: self.half.unwrap_or(false),
                }
            }
            Command::Discontinuity => {
                let ladder = self.hurst_ladder.clone().ok_or_else(|| missing("hurst_ladder"))?;
                if ladder.is_empty() {
                    return Err(Error::Config("`hurst_ladder` is empty".into()));
                }
                for h in &ladder {
                    HurstParam::young(*h)?;
                }
                Plan::Discontinuity {
                    model: self.model()?,
                    ladder,
                    grid: self.steps()?,
                }
            }
            Command::Verify => Plan::Verify,
        };
        Ok(plan)
    }
}

/// Smallest power of two with `Δ ≤ ε/10`.
pub fn resolved_steps(eps: f64) -> usize {
    ((10.0 / eps).ceil() as usize).max(2).next_power_of_two()
}

/// Validated command with everything it needs.
#[derive(Debug)]
pub enum Plan {
    SampleFbm {
        hurst: HurstParam,
        grid: TimeGrid,
        dim: usize,
        method: SamplingMethod,
    },
    Simulate {
        model: ModelSpec,
        hurst: HurstParam,
        ladder: Vec<(f64, TimeGrid)>,
        paths: usize,
        statistic: Statistic,
        scaling: HScaling,
    },
    Average {
        model: ModelSpec,
        grid: TimeGrid,
    },
    AssembleKdot {
        hurst: HurstParam,
        grid: TimeGrid,
    },
    AssembleQ {
        model: ModelSpec,
        hurst: HurstParam,
        grid: TimeGrid,
        route: QRoute,
    },
    InvertQ {
        model: ModelSpec,
        hurst: HurstParam,
        mode: InvertMode,
        psi: Path,
    },
    Action {
        model: ModelSpec,
        hurst: HurstParam,
        phi: Path,
        half: bool,
    },
    Discontinuity {
        model: ModelSpec,
        ladder: Vec<f64>,
        grid: TimeGrid,
    },
    Verify,
}

/// In-memory result of a command, written out by [`RunOutput::save`].
#[derive(Debug, Clone)]
pub enum Artifact {
    Table(ResultTable),
    Path(Path),
    Matrix(OperatorMatrix),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub command: Command,
    pub provenance: Provenance,
    pub artifact: Artifact,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
    /// Failed properties of the `verify` suite.
    pub failures: usize,
}

impl RunOutput {
    /// Provenance comment line followed by the CSV body.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        match &self.artifact {
            Artifact::Table(t) => t.write_csv(out),
            Artifact::Path(p) => {
                writeln!(out, "{}", self.provenance.comment_line())?;
                p.write_csv(out)
            }
            Artifact::Matrix(m) => {
                writeln!(out, "{}", self.provenance.comment_line())?;
                m.write_csv(out)
            }
        }
    }

    /// Writes the CSV and its JSON sidecar.
    pub fn save(&self, path: &FsPath) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf)?;
        write_sidecar(path, &self.provenance)
    }
}

/// Validates, computes and returns the artifact. Nothing is written.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let plan = config.validate()?;
    let command = config.command.expect("validated");
    let seeded = matches!(command, Command::SampleFbm | Command::Simulate);
    let provenance = Provenance {
        config_hash: config.hash()?,
        ..Provenance::new(b"", seeded.then(|| config.seed()))
    };
    let mut warnings = Vec::new();
    let mut failures = 0;
    let (artifact, summary) = match plan {
        Plan::SampleFbm {
            hurst,
            grid,
            dim,
            method,
        } => {
            let p = sample_fbm(hurst, grid, dim, config.seed(), method)?;
            let end = p.at(p.len() - 1).to_vec();
            (Artifact::Path(p), serde_json::json!({ "terminal": end }))
        }
        Plan::Simulate {
            model,
            hurst,
            ladder,
            paths,
            statistic,
            scaling,
        } => {
            let eps: Vec<f64> = ladder.iter().map(|(e, _)| *e).collect();
            warnings.extend(check_scaling_ladder(scaling, &eps));
            for (e, g) in &ladder {
                if model.has_fast_process() && g.step() > e / 10.0 {
                    warnings.push(format!("stiff fast dynamics at eps={e}: step {}", g.step()));
                }
            }
            let mut base = SimConfig::new(model, ladder[0].0, hurst, ladder[0].1, config.seed());
            base.h_scaling = scaling;
            let table = ensemble_ladder(&base, &ladder, paths, statistic, provenance.clone())?;
            let means: Vec<f64> = table
                .column("mean")
                .expect("column")
                .iter()
                .map(|c| c.as_f64().unwrap_or(f64::NAN))
                .collect();
            (Artifact::Table(table), serde_json::json!({ "means": means }))
        }
        Plan::Average { model, grid } => {
            let p = solve_averaged(&model, &model.x0, grid)?;
            let end = p.at(p.len() - 1).to_vec();
            (Artifact::Path(p), serde_json::json!({ "terminal": end }))
        }
        Plan::AssembleKdot { hurst, grid } => {
            let op = CMOperator::new(hurst, grid)?;
            let m = op.matrix().clone();
            (Artifact::Matrix(m), serde_json::json!({ "c_h": op.c_h() }))
        }
        Plan::AssembleQ {
            model,
            hurst,
            grid,
            route,
        } => {
            let q = match route {
                QRoute::Composition => assemble_q(&model, hurst, grid)?,
                QRoute::Kernel => assemble_q_kernel(&model, hurst, grid)?,
            };
            let verdict = check_invertibility(&q, &model)?;
            let summary = serde_json::json!({
                "symmetry_defect": q.symmetry_defect(),
                "invertibility": verdict,
            });
            (Artifact::Matrix(q), summary)
        }
        Plan::InvertQ {
            model,
            hurst,
            mode,
            psi,
        } => match mode {
            InvertMode::Direct => {
                let q = assemble_q(&model, hurst, psi.grid())?;
                let sol = invert_q_direct(&q, &psi)?;
                if sol.residual > 1e-8 {
                    warnings.push(format!("solve residual {:e} above 1e-8", sol.residual));
                }
                (Artifact::Path(sol.u), serde_json::json!({ "residual": sol.residual }))
            }
            InvertMode::Explicit => {
                let u = invert_q_explicit(&model, hurst, &psi)?;
                (Artifact::Path(u), serde_json::json!({}))
            }
        },
        Plan::Action {
            model,
            hurst,
            phi,
            half,
        } => {
            let table = action_table(&model, hurst, &phi, half, provenance.clone())?;
            let value = table.rows()[0][1].as_f64();
            (Artifact::Table(table), serde_json::json!({ "value": value }))
        }
        Plan::Discontinuity { model, ladder, grid } => {
            let report = discontinuity_gap(&model, &ladder, grid)?;
            let table = report.to_table(provenance.clone())?;
            (Artifact::Table(table), serde_json::to_value(&report)?)
        }
        Plan::Verify => {
            let table = verify_suite(provenance.clone())?;
            failures = table
                .column("passed")
                .expect("column")
                .iter()
                .filter(|c| c.to_string() != "true")
                .count();
            (Artifact::Table(table), serde_json::json!({ "failures": failures }))
        }
    };
    Ok(RunOutput {
        command,
        provenance,
        artifact,
        summary,
        warnings,
        failures,
    })
}

pub const ACTION_COLUMNS: [&str; 7] = [
    "steps",
    "value",
    "value_half_grid",
    "refinement_rel_change",
    "non_absolutely_continuous",
    "half_factor",
    "solve_residual",
];

/// The action on the given grid and on every other node, as one row.
pub fn action_table(
    model: &ModelSpec,
    hurst: HurstParam,
    phi: &Path,
    half: bool,
    provenance: Provenance,
) -> Result<ResultTable> {
    let eval = |p: &Path| -> Result<crate::mdp::ActionValue> {
        let q = assemble_q(model, hurst, p.grid())?;
        action_with_q(
            &ActionInput {
                phi: p.clone(),
                model: model.clone(),
                hurst,
                half_factor: half,
            },
            &q,
        )
    };
    let fine = eval(phi)?;
    let n = phi.grid().n_steps();
    let coarse = if n.is_multiple_of(2) && n >= 4 {
        let grid = TimeGrid::new(n / 2)?;
        let d = phi.dim();
        let values: Vec<f64> = (0..grid.len()).flat_map(|i| phi.at(2 * i).to_vec()).collect();
        Some(eval(&Path::new(grid, d, values)?)?.value)
    } else {
        None
    };
    let change = coarse.map_or(f64::NAN, |c| (fine.value - c).abs() / fine.value.abs().max(f64::MIN_POSITIVE));
    let mut t = ResultTable::new(&ACTION_COLUMNS, 1, provenance);
    t.push(vec![
        n.into(),
        fine.value.into(),
        coarse.unwrap_or(f64::NAN).into(),
        change.into(),
        Cell::Text(fine.non_absolutely_continuous.to_string()),
        Cell::Text(half.to_string()),
        fine.solve_residual.into(),
    ])?;
    Ok(t)
}

/// Quick deterministic invariant checks, one row per property.
pub fn verify_suite(provenance: Provenance) -> Result<ResultTable> {
    let mut t = ResultTable::new(&["property", "passed", "value", "tolerance"], 1, provenance);
    for (name, value, tol) in crate::invariants::quick_checks()? {
        t.push(vec![
            name.into(),
            Cell::Text((value <= tol).to_string()),
            value.into(),
            tol.into(),
        ])?;
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub config_hash: String,
    pub identical: bool,
    pub differing_lines: usize,
}

/// Compares two output files produced from the same config. Files with
/// different config hashes are refused.
pub fn compare_outputs(a: &FsPath, b: &FsPath) -> Result<Comparison> {
    let read = |p: &FsPath| {
        fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
    };
    let (ta, tb) = (read(a)?, read(b)?);
    let hash = |text: &str, p: &FsPath| -> Result<String> {
        text.lines()
            .next()
            .and_then(|l| l.split_whitespace().find_map(|f| f.strip_prefix("config_hash=")))
            .map(str::to_string)
            .ok_or_else(|| Error::Config(format!("{} has no provenance line", p.display())))
    };
    let (ha, hb) = (hash(&ta, a)?, hash(&tb, b)?);
    if ha != hb {
        return Err(Error::Config(format!("config hashes differ: {ha} vs {hb}")));
    }
    let (la, lb): (Vec<&str>, Vec<&str>) = (ta.lines().collect(), tb.lines().collect());
    let differing = la.iter().zip(&lb).filter(|(x, y)| x != y).count() + la.len().abs_diff(lb.len());
    Ok(Comparison {
        config_hash: ha,
        identical: ta == tb,
        differing_lines: differing,
    })
}

/// Machine-readable error object.
pub fn error_json(err: &Error) -> serde_json::Value {
    serde_json::json!({
        "error": err.kind(),
        "message": err.to_string(),
        "exit_code": exit_code(err),
    })
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        2
    } else {
        3
    }
}
