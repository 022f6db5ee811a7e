//! `posefield` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use posefield::io::{self, FormatError};
use posefield::sampler::{DeStrategy, Summary};
use posefield::se3::PoseRecord;
use posefield::{
    estimate_distribution, generate, mle_estimate, ClassifierField, Error, EstimateConfig,
    ExtReal, LikelihoodConfig, MleConfig, Model, Pose, SceneField, StructuredPointCloud,
    SynthSpec,
};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "posefield", version, about = "Probabilistic 6-DoF object pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic object, scene and classifier with ground truth.
    Synth(Flags),
    /// Robust maximum-likelihood pose.
    Mle(Flags),
    /// Particle approximation of the pose distribution.
    Estimate(Flags),
    /// Log-likelihood of one pose.
    Eval(Flags),
}

/// Every flag can also be given as a same-named key (with underscores) in
/// the `--config` JSON file; flags win.
#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Flags {
    #[arg(long)]
    object: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Synthetic scene spec (JSON); replaces the three input files.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    /// Classifier floor; cells at the stored floor are moved to it.
    #[arg(long, allow_hyphen_values = true)]
    c_min: Option<f64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Pose JSON for `eval`: a file path or an inline object.
    #[arg(long)]
    pose: Option<String>,
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    differential_weight: Option<f64>,
    #[arg(long)]
    crossover_rate: Option<f64>,
    /// best1, current_to_best1 or rand1.
    #[arg(long)]
    strategy: Option<String>,
    /// Seed the search with the MLE pose (default true).
    #[arg(long)]
    use_mle: Option<bool>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    gnc_max_iterations: Option<usize>,
    #[arg(long)]
    gnc_truncation: Option<f64>,
}

impl Flags {
    /// Fills unset flags from `other`.
    fn or(self, other: Flags) -> Flags {
        macro_rules! pick {
            ($($f:ident),*) => { Flags { $($f: self.$f.or(other.$f),)* } };
        }
        pick!(
            object, scene, classifier, spec, out, beta, c_min, particles, seed, config, pose,
            population_size, generations, differential_weight, crossover_rate, strategy, use_mle,
            top_k, gnc_max_iterations, gnc_truncation
        )
    }

    fn resolve(self) -> Result<Flags, Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::io)?;
        let file: Flags = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(Failure::input)?;
        Ok(self.or(file))
    }

    fn likelihood(&self) -> LikelihoodConfig {
        let mut cfg = LikelihoodConfig::default();
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        cfg
    }

    fn mle(&self) -> MleConfig {
        let mut cfg = MleConfig {
            likelihood: self.likelihood(),
            ..MleConfig::default()
        };
        if let Some(k) = self.top_k {
            cfg.top_k = k;
        }
        if let Some(n) = self.gnc_max_iterations {
            cfg.gnc.max_iterations = n;
        }
        if self.gnc_truncation.is_some() {
            cfg.gnc.truncation = self.gnc_truncation;
        }
        cfg
    }

    fn estimate(&self) -> Result<EstimateConfig, Failure> {
        let mut cfg = EstimateConfig {
            likelihood: self.likelihood(),
            mle: self.mle(),
            ..EstimateConfig::default()
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(particles, seed, population_size, generations, differential_weight, crossover_rate, use_mle);
        if let Some(s) = &self.strategy {
            cfg.strategy = match s.as_str() {
                "best1" => DeStrategy::Best1,
                "current_to_best1" => DeStrategy::CurrentToBest1,
                "rand1" => DeStrategy::Rand1,
                other => {
                    return Err(Failure::input(anyhow!("unknown DE strategy {other:?}")));
                }
            };
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self
            .out
            .clone()
            .ok_or_else(|| Failure::input(anyhow!("--out is required")))?;
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))
            .map_err(Failure::io)?;
        Ok(dir)
    }
}

/// Exit code with its diagnostic.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    const INPUT: u8 = 2;
    const IO: u8 = 3;
    const NO_CORRESPONDENCES: u8 = 4;
    const ALL_INFEASIBLE: u8 = 5;

    fn input(error: anyhow::Error) -> Self {
        Self { code: Self::INPUT, error }
    }

    fn io(error: anyhow::Error) -> Self {
        Self { code: Self::IO, error }
    }

    /// Classifies a library error.
    fn lib(error: Error, context: String) -> Self {
        let code = match &error {
            Error::Format(FormatError::Io(_)) => Self::IO,
            Error::NoCorrespondences => Self::NO_CORRESPONDENCES,
            Error::AllInfeasible | Error::NoRegularVoxels => Self::ALL_INFEASIBLE,
            _ => Self::INPUT,
        };
        Self {
            code,
            error: anyhow::Error::new(error).context(context),
        }
    }
}

trait LibContext<T> {
    fn ctx(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T> LibContext<T> for posefield::Result<T> {
    fn ctx(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::lib(e, what()))
    }
}

impl Failure {
    /// Re-codes a missing observed surface for commands that report it
    /// differently.
    fn no_surface_as(mut self, code: u8) -> Self {
        if matches!(self.error.downcast_ref::<Error>(), Some(Error::NoRegularVoxels)) {
            self.code = code;
        }
        self
    }
}

struct Inputs {
    object: StructuredPointCloud,
    scene: SceneField,
    classifier: ClassifierField,
}

fn load_spec(path: &Path) -> Result<SynthSpec, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))
        .map_err(Failure::io)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing spec {}", path.display()))
        .map_err(Failure::input)
}

fn load_inputs(flags: &Flags) -> Result<Inputs, Failure> {
    let files = [&flags.object, &flags.scene, &flags.classifier];
    let mut inputs = match (&flags.spec, files.iter().filter(|f| f.is_some()).count()) {
        (Some(spec), 0) => {
            let mut spec = load_spec(spec)?;
            if let Some(c) = flags.c_min {
                spec.c_min = c;
            }
            let inst = generate(&spec).ctx(|| "generating synthetic scene".into())?;
            return Ok(Inputs {
                object: inst.object,
                scene: inst.scene,
                classifier: inst.classifier,
            });
        }
        (None, 3) => {
            let (o, s, c) = (
                flags.object.as_ref().unwrap(),
                flags.scene.as_ref().unwrap(),
                flags.classifier.as_ref().unwrap(),
            );
            let (object, scene, classifier) = io::load_inputs(o, s, c).ctx(|| {
                format!("loading {}, {}, {}", o.display(), s.display(), c.display())
            })?;
            Inputs {
                object,
                scene,
                classifier,
            }
        }
        _ => {
            return Err(Failure::input(anyhow!(
                "give either --spec or all of --object, --scene and --classifier"
            )))
        }
    };
    if let Some(c) = flags.c_min {
        inputs.classifier = refloor(&inputs.classifier, c).ctx(|| "applying --c-min".into())?;
    }
    Ok(inputs)
}

/// Moves cells at the classifier's floor to `c_min` and clamps the rest.
fn refloor(cls: &ClassifierField, c_min: f64) -> posefield::Result<ClassifierField> {
    let old = cls.c_min() as f32;
    let new = c_min as f32;
    let values = cls
        .values()
        .iter()
        .map(|&v| if v <= old { new } else { v.max(new) })
        .collect();
    ClassifierField::new(*cls.geometry(), values, c_min)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::io)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct GroundTruth {
    gt_pose: Pose,
    symmetry_group: Vec<Pose>,
    /// The group samples a continuous symmetry about z.
    continuous_symmetry: bool,
}

fn cmd_synth(flags: &Flags) -> Result<(), Failure> {
    let path = flags
        .spec
        .as_ref()
        .ok_or_else(|| Failure::input(anyhow!("--spec is required")))?;
    let mut spec = load_spec(path)?;
    if let Some(c) = flags.c_min {
        spec.c_min = c;
    }
    if let Some(s) = flags.seed {
        spec.seed = s;
    }
    let inst = generate(&spec)
        .ctx(|| format!("generating from {}", path.display()))
        .map_err(|f| f.no_surface_as(Failure::INPUT))?;
    let out = flags.out_dir()?;
    let p = out.join("object.spcl");
    io::save_object(&inst.object, &p).ctx(|| format!("writing {}", p.display()))?;
    let p = out.join("scene.svol");
    io::save_scene(&inst.scene, &p).ctx(|| format!("writing {}", p.display()))?;
    let p = out.join("classifier.pcls");
    io::save_classifier(&inst.classifier, &p).ctx(|| format!("writing {}", p.display()))?;
    let gt = GroundTruth {
        gt_pose: inst.gt_pose,
        symmetry_group: inst.symmetry_group,
        continuous_symmetry: inst.continuous_symmetry,
    };
    write(&out.join("ground_truth.json"), to_json(&gt))
}

#[derive(Serialize)]
struct MleReport<'a> {
    pose: Pose,
    objective: f64,
    /// `null` when the pose is infeasible.
    log_likelihood: Option<f64>,
    correspondences: usize,
    gnc_log: &'a [posefield::robust::GncStep],
}

fn cmd_mle(flags: &Flags) -> Result<(), Failure> {
    let inp = load_inputs(flags).map_err(|f| f.no_surface_as(Failure::INPUT))?;
    let cfg = flags.mle();
    let res = mle_estimate(&inp.object, &inp.scene, &inp.classifier, &cfg, None)
        .ctx(|| "robust MLE".into())
        .map_err(|f| f.no_surface_as(Failure::NO_CORRESPONDENCES))?;
    let out = flags.out_dir()?;
    let report = MleReport {
        pose: res.pose,
        objective: res.objective,
        log_likelihood: res.log_likelihood.finite(),
        correspondences: res.gnc.inlier_weights.len(),
        gnc_log: &res.gnc.log,
    };
    write(&out.join("mle_pose.json"), to_json(&report))
}

#[derive(Serialize)]
struct SummaryReport<'a> {
    #[serde(flatten)]
    summary: &'a Summary,
    mle_pose: Option<Pose>,
    mle_error: Option<&'a str>,
    seed: u64,
}

fn cmd_estimate(flags: &Flags) -> Result<(), Failure> {
    let inp = load_inputs(flags)?;
    let cfg = flags.estimate()?;
    let est = estimate_distribution(&inp.object, &inp.scene, &inp.classifier, &cfg)
        .ctx(|| "estimating the pose distribution".into())?;
    let out = flags.out_dir()?;
    write(&out.join("particles.jsonl"), io::particle_jsonl(&est.particles))?;
    for m in &est.marginals {
        write(&out.join(format!("marginal_{}.csv", m.coordinate.name())), io::marginal_csv(m))?;
    }
    let report = SummaryReport {
        summary: &est.summary,
        mle_pose: est.mle.as_ref().map(|m| m.pose),
        mle_error: est.mle_error.as_deref(),
        seed: cfg.seed,
    };
    write(&out.join("summary.json"), to_json(&report))
}

fn parse_pose(arg: &str) -> Result<Pose, Failure> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg)
            .with_context(|| format!("reading pose {arg}"))
            .map_err(Failure::io)?
    };
    let rec: PoseRecord = serde_json::from_str(&text)
        .context("parsing pose JSON (keys qw qx qy qz tx ty tz)")
        .map_err(Failure::input)?;
    Pose::try_from(rec).ctx(|| "invalid pose".into())
}

fn cmd_eval(flags: &Flags) -> Result<(), Failure> {
    let pose = parse_pose(
        flags
            .pose
            .as_deref()
            .ok_or_else(|| Failure::input(anyhow!("--pose is required")))?,
    )?;
    let inp = load_inputs(flags).map_err(|f| f.no_surface_as(Failure::INPUT))?;
    let model = Model::new(&inp.object, &inp.scene, &inp.classifier, flags.likelihood())
        .ctx(|| "checking inputs".into())?;
    match model.log_likelihood(&pose) {
        ExtReal::Finite(v) => println!("{v}"),
        ExtReal::NegInf => println!("-inf"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(f) => cmd_synth(&f.resolve()?),
        Command::Mle(f) => cmd_mle(&f.resolve()?),
        Command::Estimate(f) => cmd_estimate(&f.resolve()?),
        Command::Eval(f) => cmd_eval(&f.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Failure::INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
