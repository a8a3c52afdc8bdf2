use std::fmt;
use std::io::Write;
use std::path::Path;

use priorcheck::calibration::{calibrate_stage, CalibrationSpec, Truth};
use priorcheck::checks::run_protocol;
use priorcheck::io::{calibration_to_json, load_config_json, load_dataset_csv, report_to_json};
use priorcheck::rng::RngStream;
use priorcheck::sampler::{
    helmert_basis, sample_residual_matrix, sample_t_given_v, sample_unit_sphere,
    sample_v_given_hyper,
};
use priorcheck::{Discrepancy, Error, ErrorClass, HyperStat, SamplingModel, Stage};
use serde_json::{Map, Value};

use crate::{Command, SampleKind, StageArg};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.class() {
                ErrorClass::Infeasible => 3,
                ErrorClass::Invalid | ErrorClass::Io => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn with_context(path: &Path, e: Error) -> CliError {
    match e {
        Error::Io(io) => CliError::Core(Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        ))),
        other => CliError::Core(other),
    }
}

fn pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| with_context(path, Error::Io(e))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Core(Error::Io(e)))
        }
    }
}

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run {
            data,
            config,
            seed,
            draws,
            out,
            threads,
        } => {
            let dataset = load_dataset_csv(&data).map_err(|e| with_context(&data, e))?;
            let mut cfg = load_config_json(&config).map_err(|e| with_context(&config, e))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(draws) = draws {
                if draws == 0 {
                    return Err(CliError::Usage("--draws must be at least 1".into()));
                }
                cfg.n_draws = draws;
            }
            cfg.output = out;
            let model = SamplingModel::for_dataset(cfg.sigma2, &dataset)?;
            let protocol = cfg.protocol_config()?;
            let report = pool(threads.threads)?
                .install(|| run_protocol(&dataset, &model, &cfg.hyperprior, &protocol));
            emit(&report_to_json(&report), cfg.output.as_deref())
        }
        Command::Calibrate {
            config,
            stage,
            datasets,
            draws,
            truth_mu,
            truth_tau2,
            groups,
            per_group,
            seed,
            out,
            threads,
        } => {
            let cfg = load_config_json(&config).map_err(|e| with_context(&config, e))?;
            let stage = match stage {
                StageArg::Model => Stage::Model,
                StageArg::Pi2 => Stage::Pi2,
                StageArg::Pi1 => Stage::Pi1,
                StageArg::Pi2Star => Stage::Pi2Star,
            };
            let names = &cfg.discrepancies;
            let name = match stage {
                Stage::Model => &names.model,
                Stage::Pi2 | Stage::Pi2Star => &names.pi2,
                Stage::Pi1 => &names.pi1,
            };
            let discrepancy = Discrepancy::builtin(name)?;
            let truth = match stage {
                Stage::Model | Stage::Pi2 => Truth::Fixed {
                    mu: truth_mu,
                    tau2: truth_tau2,
                },
                Stage::Pi1 | Stage::Pi2Star => {
                    if !cfg.hyperprior.is_proper() {
                        return Err(CliError::Core(Error::InvalidParameter {
                            name: "hyperprior",
                            reason: format!(
                                "stage {stage} needs a proper hyperprior; an improper hyperprior is \
                                 asserted never to conflict with the data, so its check is always skipped"
                            ),
                        }));
                    }
                    Truth::Prior(cfg.hyperprior)
                }
            };
            let spec = CalibrationSpec {
                stage,
                model: SamplingModel::new(cfg.sigma2, per_group, groups)?,
                truth,
                discrepancy: &discrepancy,
                datasets,
                n_inner: draws,
            };
            let stream = RngStream::new(seed.unwrap_or(cfg.seed), 0);
            let result = pool(threads.threads)?.install(|| calibrate_stage(&spec, stream))?;
            emit(&calibration_to_json(&result), out.as_deref())
        }
        Command::Sample {
            what,
            params,
            count,
            seed,
        } => sample(what, &params, count, seed),
    }
}

struct Params(Map<String, Value>);

impl Params {
    fn parse(text: &str, allowed: &[&str]) -> CliResult<Self> {
        let value: Value = serde_json::from_str(text).map_err(Error::from)?;
        let Value::Object(map) = value else {
            return Err(Error::TypeMismatch {
                key: "--params".into(),
                expected: "object",
            }
            .into());
        };
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::UnknownKey(k.clone()).into());
        }
        Ok(Self(map))
    }

    fn value(&self, key: &str) -> CliResult<&Value> {
        self.0
            .get(key)
            .ok_or_else(|| Error::MissingRequired(key.to_owned()).into())
    }

    fn float(&self, key: &str) -> CliResult<f64> {
        self.value(key)?.as_f64().ok_or_else(|| {
            Error::TypeMismatch {
                key: key.to_owned(),
                expected: "number",
            }
            .into()
        })
    }

    fn count(&self, key: &str) -> CliResult<usize> {
        self.value(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| {
                Error::TypeMismatch {
                    key: key.to_owned(),
                    expected: "nonnegative integer",
                }
                .into()
            })
    }

    fn model(&self) -> CliResult<SamplingModel> {
        Ok(SamplingModel::new(
            self.float("sigma2")?,
            self.count("n")?,
            self.count("I")?,
        )?)
    }
}

fn to_line<T: ?Sized + serde::Serialize>(draw: &T) -> String {
    serde_json::to_string(draw).expect("finite draws serialize")
}

fn sample(what: SampleKind, params: &str, count: usize, seed: u64) -> CliResult<()> {
    let mut lines = Vec::with_capacity(count);
    match what {
        SampleKind::Sphere => {
            let p = Params::parse(params, &["dim"])?;
            let dim = p.count("dim")?;
            if dim == 0 {
                return Err(Error::InvalidParameter {
                    name: "dim",
                    reason: "must be at least 1".into(),
                }
                .into());
            }
            for k in 0..count as u64 {
                lines.push(to_line(&sample_unit_sphere(
                    dim,
                    &mut RngStream::new(seed, k).rng(),
                )));
            }
        }
        SampleKind::TGivenV => {
            let p = Params::parse(params, &["s", "q", "I"])?;
            let groups = p.count("I")?;
            let v = HyperStat::new(p.float("s")?, p.float("q")?, groups)?;
            let basis = helmert_basis(groups)?;
            for k in 0..count as u64 {
                let y = sample_t_given_v(&v, &basis, &mut RngStream::new(seed, k).rng())?;
                lines.push(to_line(&y));
            }
        }
        SampleKind::Residuals => {
            let model = Params::parse(params, &["sigma2", "n", "I"])?.model()?;
            for k in 0..count as u64 {
                lines.push(to_line(&sample_residual_matrix(
                    &model,
                    &mut RngStream::new(seed, k).rng(),
                )));
            }
        }
        SampleKind::VGivenHyper => {
            let p = Params::parse(params, &["mu", "tau2", "sigma2", "n", "I"])?;
            let model = p.model()?;
            let (mu, tau2) = (p.float("mu")?, p.float("tau2")?);
            for k in 0..count as u64 {
                let v = sample_v_given_hyper(mu, tau2, &model, &mut RngStream::new(seed, k).rng())?;
                lines.push(to_line(&vec![v.s(), v.q()]));
            }
        }
    }
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    emit(&text, None)
}
