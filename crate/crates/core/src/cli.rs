//! Command-line front end.
//!
//! Every flag may also be given in a TOML file passed with `--config`, using
//! the flag name without dashes as the key (`k-aux = [10, 20]`). Flags win
//! over file values. Each CSV written starts with a `#` line recording the
//! tool version and the resolved settings, so reruns can be compared byte for
//! byte.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::data::{
    load_dataset, read_matrix_csv, write_matrix_csv, CoefficientMatrix, MultiTaskDataset,
    NoiseCovariance, Schema, TaskKind,
};
use crate::error::{Error, Result};
use crate::glm::{fit_weighted_logistic, IrlsOptions};
use crate::ols::fit_multitask_ols;
use crate::select::{
    backward_task_elimination, rank_sweep, write_trace_csv, Evaluator, RankPolicy,
    SelectionOptions, TaskSet,
};
use crate::sim::{
    run_replications, scenario_grid, write_replications_csv, write_summary_csv, GridOverrides,
    Scenario,
};
use crate::weights::{feasible_weight_solution, solve_optimal_weight, weighted_estimate};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Fit,
    FitLogistic,
    Simulate,
    SelectTasks,
    SelectRank,
    Weights,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::FitLogistic => "fit-logistic",
            Command::Simulate => "simulate",
            Command::SelectTasks => "select-tasks",
            Command::SelectRank => "select-rank",
            Command::Weights => "weights",
        }
    }
}

#[derive(Debug, Clone, Default, Parser, Deserialize)]
#[command(
    name = "auxlearn",
    version,
    about = "Auxiliary-task weighted estimation"
)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Args {
    #[arg(value_enum)]
    #[serde(skip)]
    pub command: Option<Command>,

    /// Dataset CSV (fit, fit-logistic, select-*).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Assumed rank d of the coefficient matrix.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub k_aux: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    #[arg(long)]
    pub k_useless: Option<usize>,
    /// Monte-Carlo replications (simulate) or random splits (select-*).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub flat_tol: Option<f64>,
    /// linear_mse or logistic_err.
    #[arg(long)]
    pub evaluator: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Primary response column; defaults to the first `y*` column.
    #[arg(long)]
    pub primary: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub aux: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Response columns holding 0/1 labels.
    #[arg(long, value_delimiter = ',')]
    pub binary: Option<Vec<String>>,
    /// Auxiliary task indices (1-based) for select-rank.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub d_grid: Option<Vec<usize>>,
    /// Prefix sizes scored by the low_quality scenario.
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    /// Coefficient matrix CSV for `weights`.
    #[arg(long)]
    pub b_matrix: Option<PathBuf>,
    /// Noise covariance CSV for `weights`.
    #[arg(long)]
    pub sigma_eps: Option<PathBuf>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )*
    };
}

impl Args {
    /// Fills unset flags from the `--config` file, if any.
    pub fn resolve(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let file: Args = toml::from_str(&text).map_err(|e| {
            Error::InvalidParameter(format!("config `{}`: {}", path.display(), e.message()))
        })?;
        overlay!(self, file;
            input, output_dir, rank, scenario, n, p, k_aux, d, k_useless, reps, seed,
            train_frac, flat_tol, evaluator, primary, aux, covariates, binary, tasks,
            d_grid, k_grid, b_matrix, sigma_eps, noise_scale);
        Ok(self)
    }

    fn command(&self) -> Result<Command> {
        self.command
            .ok_or_else(|| Error::InvalidParameter("no command given".into()))
    }

    fn output_dir(&self) -> Result<PathBuf> {
        let dir = self
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(dir)
    }

    fn required<'a, V>(&self, value: &'a Option<V>, flag: &str) -> Result<&'a V> {
        value.as_ref().ok_or_else(|| {
            Error::InvalidParameter(format!(
                "`{}` requires --{flag}",
                self.command.map_or("command", Command::name)
            ))
        })
    }

    fn schema(&self) -> Schema {
        Schema {
            primary: self.primary.clone(),
            auxiliary: self.aux.clone(),
            covariates: self.covariates.clone(),
            binary: self.binary.clone().unwrap_or_default(),
        }
    }

    fn evaluator(&self) -> Result<Evaluator> {
        self.evaluator.as_deref().unwrap_or("linear_mse").parse()
    }

    fn selection_options(&self) -> Result<SelectionOptions> {
        let mut opts = SelectionOptions::new(self.evaluator()?);
        if let Some(r) = self.reps {
            opts.r_reps = r;
        }
        if let Some(s) = self.seed {
            opts.seed = s;
        }
        if let Some(f) = self.train_frac {
            opts.train_frac = f;
        }
        if let Some(t) = self.flat_tol {
            opts.flat_tol = t;
        }
        Ok(opts)
    }

    /// `auxlearn <version> command=<cmd> key=value …`, listing every setting
    /// that affects the output. The output directory is left out so that the
    /// same run written to two places yields identical files.
    pub fn header_line(&self) -> String {
        let mut s = format!(
            "auxlearn {VERSION} command={}",
            self.command.map_or("none", Command::name)
        );
        fn list<V: ToString>(v: &[V]) -> String {
            v.iter().map(V::to_string).collect::<Vec<_>>().join(";")
        }
        let mut kv = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                let _ = write!(s, " {k}={v}");
            }
        };
        kv(
            "input",
            self.input.as_ref().map(|p| p.display().to_string()),
        );
        kv("rank", self.rank.map(|v| v.to_string()));
        kv("scenario", self.scenario.clone());
        kv("n", self.n.as_deref().map(list));
        kv("p", self.p.map(|v| v.to_string()));
        kv("k-aux", self.k_aux.as_deref().map(list));
        kv("d", self.d.as_deref().map(list));
        kv("k-useless", self.k_useless.map(|v| v.to_string()));
        kv("reps", self.reps.map(|v| v.to_string()));
        kv("seed", self.seed.map(|v| v.to_string()));
        kv("train-frac", self.train_frac.map(|v| v.to_string()));
        kv("flat-tol", self.flat_tol.map(|v| v.to_string()));
        kv("evaluator", self.evaluator.clone());
        kv("primary", self.primary.clone());
        kv("aux", self.aux.as_deref().map(list));
        kv("covariates", self.covariates.as_deref().map(list));
        kv("binary", self.binary.as_deref().map(list));
        kv("tasks", self.tasks.as_deref().map(list));
        kv("d-grid", self.d_grid.as_deref().map(list));
        kv("k-grid", self.k_grid.as_deref().map(list));
        kv(
            "b-matrix",
            self.b_matrix.as_ref().map(|p| p.display().to_string()),
        );
        kv(
            "sigma-eps",
            self.sigma_eps.as_ref().map(|p| p.display().to_string()),
        );
        kv("noise-scale", self.noise_scale.map(|v| v.to_string()));
        s
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
/// Errors are reported on `stderr` as one line:
/// `error: code=<tag> message=<text>`.
pub fn run_from<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            let _ = writeln!(err, "error: code=usage message={first}");
            return 2;
        }
    };
    match args.resolve().and_then(|a| execute(&a, out)) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: code={} message={msg}", e.code());
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_from(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Runs a resolved command, writing artifacts to the output directory and a
/// short report to `out`.
pub fn execute(args: &Args, out: &mut dyn Write) -> Result<()> {
    match args.command()? {
        Command::Fit => cmd_fit(args, out),
        Command::FitLogistic => cmd_fit_logistic(args, out),
        Command::Simulate => cmd_simulate(args, out),
        Command::SelectTasks => cmd_select_tasks(args, out),
        Command::SelectRank => cmd_select_rank(args, out),
        Command::Weights => cmd_weights(args, out),
    }
}

fn say(out: &mut dyn Write, line: String) -> Result<()> {
    writeln!(out, "{line}").map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn join_nums(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter()
        .map(crate::data::csv_fmt_num)
        .collect::<Vec<_>>()
        .join(",")
}

fn row_matrix(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, values.len(), values)
}

struct FitArtifacts<'a> {
    dir: &'a Path,
    header: &'a str,
    response_names: &'a [String],
}

impl FitArtifacts<'_> {
    fn write(&self, file: &str, header: &[String], m: &DMatrix<f64>) -> Result<()> {
        write_matrix_csv(self.dir.join(file), Some(self.header), header, m)
    }

    fn weights(&self, w: &[f64]) -> Result<()> {
        self.write("weights.csv", self.response_names, &row_matrix(w))
    }
}

fn load(args: &Args) -> Result<MultiTaskDataset<f64>> {
    let path = args.required(&args.input, "input")?;
    load_dataset(path, &args.schema())
}

fn cmd_fit(args: &Args, out: &mut dyn Write) -> Result<()> {
    let d = *args.required(&args.rank, "rank")?;
    let data = load(args)?;
    let fit = fit_multitask_ols(&data)?;
    let solution = feasible_weight_solution(&fit, d)?;
    let estimate = weighted_estimate(&fit, &solution.weight)?;

    let dir = args.output_dir()?;
    let header = args.header_line();
    let art = FitArtifacts {
        dir: &dir,
        header: &header,
        response_names: data.response_names(),
    };
    art.write("b_hat.csv", data.response_names(), fit.b_hat.entries())?;
    art.write(
        "sigma_eps.csv",
        data.response_names(),
        fit.sigma_eps_hat.entries(),
    )?;
    art.weights(solution.weight.as_slice())?;
    art.write(
        "beta_weighted.csv",
        data.covariate_names(),
        &row_matrix(estimate.beta_weighted.as_slice()),
    )?;

    say(
        out,
        format!(
            "P={}",
            crate::data::csv_fmt_num(estimate.variance_functional)
        ),
    )?;
    say(
        out,
        format!(
            "trailing_eigenvalues={}",
            join_nums(solution.basis.trailing_eigenvalues().iter().copied())
        ),
    )?;
    if solution.pseudo_inverse {
        say(out, "warning=pseudo_inverse".into())?;
    }
    Ok(())
}

fn cmd_fit_logistic(args: &Args, out: &mut dyn Write) -> Result<()> {
    let d = *args.required(&args.rank, "rank")?;
    let mut data = load(args)?;
    if args.binary.is_none() {
        // Without an explicit list every response is taken as a label column.
        let k = data.k_aux() + 1;
        data = MultiTaskDataset::with_names(
            data.covariates().clone(),
            data.responses().clone(),
            vec![TaskKind::Binary; k],
            data.covariate_names().to_vec(),
            data.response_names().to_vec(),
        )?;
    }
    let result = fit_weighted_logistic(&data, d, IrlsOptions::default())?;

    let dir = args.output_dir()?;
    let header = args.header_line();
    let art = FitArtifacts {
        dir: &dir,
        header: &header,
        response_names: data.response_names(),
    };
    art.write(
        "b_hat.csv",
        data.response_names(),
        result.fit.b_hat.entries(),
    )?;
    art.write(
        "sigma_eps.csv",
        data.response_names(),
        result.fit.sigma_eps_hat.entries(),
    )?;
    art.weights(result.solution.weight.as_slice())?;
    art.write(
        "beta_weighted.csv",
        data.covariate_names(),
        &row_matrix(result.estimate.beta_weighted.as_slice()),
    )?;

    say(
        out,
        format!(
            "P={}",
            crate::data::csv_fmt_num(result.estimate.variance_functional)
        ),
    )?;
    say(
        out,
        format!(
            "trailing_eigenvalues={}",
            join_nums(result.solution.basis.trailing_eigenvalues().iter().copied())
        ),
    )?;
    if let Some(task) = result.fit.converged.iter().position(|c| !c) {
        return Err(Error::NotConverged {
            task,
            iterations: result.fit.iterations[task],
        });
    }
    Ok(())
}

fn cmd_weights(args: &Args, out: &mut dyn Write) -> Result<()> {
    let d = *args.required(&args.rank, "rank")?;
    let (names, b) = read_matrix_csv::<f64>(args.required(&args.b_matrix, "b-matrix")?)?;
    let (_, sigma) = read_matrix_csv::<f64>(args.required(&args.sigma_eps, "sigma-eps")?)?;
    let b = CoefficientMatrix::new(b)?;
    let sigma = NoiseCovariance::new(sigma)?;
    let solution = solve_optimal_weight(&b, &sigma, d)?;
    let p_value = crate::weights::variance_functional(&solution.weight, &sigma)?;

    let dir = args.output_dir()?;
    write_matrix_csv(
        dir.join("weights.csv"),
        Some(&args.header_line()),
        &names,
        &row_matrix(solution.weight.as_slice()),
    )?;
    say(out, format!("P={}", crate::data::csv_fmt_num(p_value)))?;
    say(
        out,
        format!(
            "weights={}",
            join_nums(solution.weight.as_slice().iter().copied())
        ),
    )
}

fn cmd_simulate(args: &Args, out: &mut dyn Write) -> Result<()> {
    let scenario: Scenario = args.required(&args.scenario, "scenario")?.parse()?;
    let overrides = GridOverrides {
        n: args.n.clone(),
        p: args.p,
        k_aux: args.k_aux.clone(),
        d: args.d.clone(),
        k_useless: args.k_useless,
        k_grid: args.k_grid.clone(),
        m_reps: args.reps,
        seed: args.seed,
        noise_scale: args.noise_scale,
    };
    let grid = scenario_grid(scenario, &overrides)?;
    let reports = grid
        .iter()
        .map(run_replications)
        .collect::<Result<Vec<_>>>()?;

    let dir = args.output_dir()?;
    let header = args.header_line();
    write_replications_csv(dir.join("replications.csv"), Some(&header), &reports)?;
    write_summary_csv(dir.join("summary.csv"), Some(&header), &reports)?;
    for r in &reports {
        for row in r.summary() {
            say(
                out,
                format!(
                    "n={} p={} k_aux={} d={} {} mse={}",
                    r.config.n,
                    r.config.p,
                    r.config.k_aux,
                    r.config.d,
                    row.label,
                    crate::data::csv_fmt_num(row.mse)
                ),
            )?;
        }
    }
    Ok(())
}

fn cmd_select_tasks(args: &Args, out: &mut dyn Write) -> Result<()> {
    let data = load(args)?;
    let opts = args.selection_options()?;
    let policy = args.rank.map_or(RankPolicy::FullRank, RankPolicy::Capped);
    let trace = backward_task_elimination(&data, policy, &opts)?;
    let dir = args.output_dir()?;
    write_trace_csv(
        dir.join("task_trace.csv"),
        Some(&args.header_line()),
        &trace,
    )?;
    say(
        out,
        format!("S_opt={{{}}}", trace.chosen_tasks.label().replace(';', ",")),
    )
}

fn cmd_select_rank(args: &Args, out: &mut dyn Write) -> Result<()> {
    let data = load(args)?;
    let opts = args.selection_options()?;
    let tasks = match &args.tasks {
        Some(t) => TaskSet::new(t.clone(), data.k_aux())?,
        None => TaskSet::all(data.k_aux()),
    };
    let grid = args
        .d_grid
        .clone()
        .unwrap_or_else(|| (1..=tasks.len() + 1).collect());
    let trace = rank_sweep(&data, &tasks, &grid, &opts)?;
    let dir = args.output_dir()?;
    write_trace_csv(
        dir.join("rank_trace.csv"),
        Some(&args.header_line()),
        &trace,
    )?;
    let d_opt = trace.chosen_rank.expect("rank sweep sets a rank");
    say(out, format!("d_opt={d_opt}"))
}
