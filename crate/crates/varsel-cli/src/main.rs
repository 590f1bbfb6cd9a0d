//! Command-line front end: selection, SLOPE/LASSO fits, knockoffs,
//! simulation reproduction, and criterion-based thresholding of an existing
//! fit. Structured results go to JSON, tables to CSV; outputs are
//! byte-stable given identical inputs and seed.

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use varsel::criteria::{CriterionKind, CriterionSpec};
use varsel::cv::{cv_select, write_cv_table_csv, CvSpec};
use varsel::data::{load_csv, standardize, Dataset, Family, StandardizeMode, Standardization};
use varsel::error::Error;
use varsel::knockoffs;
use varsel::sim;
use varsel::slope::{
    self, fit_slope, make_lambda, slope_path, LambdaRule, LambdaSequence, SlopeOptions,
};
use varsel::stepwise::{self, SearchOptions, SearchPlan, SearchStage};
use varsel::RngStream;

#[derive(Parser)]
#[command(name = "varsel", version, about = "Variable selection for high-dimensional regression")]
struct Cli {
    /// Default RNG seed (env: VARSEL_SEED).
    #[arg(long, global = true, env = "VARSEL_SEED", default_value_t = 1)]
    seed: u64,
    /// Worker threads for replicate-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stepwise selection under an information criterion.
    Select(SelectArgs),
    /// SLOPE fit with a BH-derived sequence, optional path or (c,q) CV.
    Slope(SlopeArgs),
    /// LASSO fit at a fixed lambda or with cross-validated selection.
    Lasso(LassoArgs),
    /// Model-X knockoff filter with known covariance.
    Knockoff(KnockoffArgs),
    /// Run a built-in or configured simulation scenario.
    Simulate(SimulateArgs),
    /// Backward-eliminate an existing fit under an information criterion.
    Threshold(ThresholdArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binomial => Family::Binomial,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Response column name.
    #[arg(long)]
    response: String,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    family: FamilyArg,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Criterion minimized by the default plan stages.
    #[arg(long, default_value = "mbic2")]
    criterion: String,
    /// Stage list, e.g. "screen=0.15,forward=bic,backward=mbic2,stepwise=mbic2"
    /// or "forward-steps=bic:2"; "default" expands to the standard recipe.
    #[arg(long, default_value = "default")]
    plan: String,
    /// Prior expected number of signals (mBIC/mBIC2).
    #[arg(long, default_value_t = 4.0)]
    e: f64,
    /// Constant in mAIC/mAIC2.
    #[arg(long = "const", default_value_t = 0.5)]
    constant: f64,
    /// EBIC weight in [0,1].
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Bh,
    Heuristic,
    Inflated,
    Constant,
    SecondOrder,
}

#[derive(Args)]
struct SlopeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = RuleArg::Bh)]
    rule: RuleArg,
    #[arg(long, default_value_t = 0.2)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Noise level used by the heuristic rule.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Constant-rule lambda value.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Select (c,q) by 10-fold cross-validation instead of a single fit.
    #[arg(long, conflicts_with_all = ["path", "lambda_in"])]
    cv: bool,
    /// Comma-separated scale grid: fit a warm-started path over c * lambda.
    #[arg(long)]
    path: Option<String>,
    /// Read the sequence from a single-column CSV instead of a rule.
    #[arg(long)]
    lambda_in: Option<PathBuf>,
    /// Export the sequence used to a single-column CSV.
    #[arg(long)]
    lambda_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StandardizeArg::CenterUnitL2One)]
    standardize: StandardizeArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StandardizeArg {
    None,
    Center,
    CenterUnitL2,
    CenterUnitL2One,
}

#[derive(Args)]
struct LassoArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fixed penalty; omit with --cv to cross-validate the default grid.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    cv: bool,
    #[arg(long, value_enum, default_value_t = StandardizeArg::CenterUnitL2One)]
    standardize: StandardizeArg,
}

#[derive(Args)]
struct KnockoffArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Known p x p row covariance as a headerless numeric CSV.
    #[arg(long)]
    sigma: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    q: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario name (see --list).
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario sample size (built-ins only).
    #[arg(long)]
    n: Option<usize>,
    /// Override the within-block or compound-symmetry correlation.
    #[arg(long)]
    rho: Option<f64>,
    /// Override the signal count where the study is parameterized by k.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// List built-in scenarios and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct ThresholdArgs {
    /// JSON fit produced by select/slope/lasso (anything with support[].index).
    #[arg(long)]
    fit: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mbic2")]
    criterion: String,
    /// Penalty dimension; defaults to the full column count of the data.
    #[arg(long)]
    p_total: Option<usize>,
}

// ---------------------------------------------------------------------------
// JSON schemas
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SupportEntry {
    index: usize,
    name: String,
    coefficient: f64,
}

#[derive(Serialize)]
struct SelectionReport {
    criterion: String,
    criterion_value: f64,
    n: usize,
    p: usize,
    family: String,
    seed: u64,
    intercept: f64,
    support: Vec<SupportEntry>,
    flags: varsel::criteria::FitFlags,
    trace: Vec<stepwise::TraceEntry>,
}

#[derive(Serialize)]
struct SlopeReport {
    method: String,
    rule: String,
    n: usize,
    p: usize,
    family: String,
    objective: f64,
    kkt_residual: f64,
    iterations: usize,
    converged: bool,
    intercept: f64,
    nonzero: usize,
    clusters: usize,
    support: Vec<SupportEntry>,
}

#[derive(Serialize)]
struct CvReport {
    method: String,
    best: String,
    n: usize,
    p: usize,
    intercept: f64,
    support: Vec<SupportEntry>,
}

#[derive(Serialize)]
struct KnockoffReport {
    q: f64,
    threshold: f64,
    selected: Vec<SupportEntry>,
}

#[derive(Deserialize)]
struct FitFile {
    support: Vec<SupportEntry>,
}

// ---------------------------------------------------------------------------

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_)
        | Error::Csv(_)
        | Error::MissingColumn(_)
        | Error::NonNumericCell { .. }
        | Error::InvalidBinaryResponse { .. }
        | Error::InvalidData(_)
        | Error::ConstantColumn(_)
        | Error::InvalidArgument(_)
        | Error::UnknownMethod(_)
        | Error::UnknownScenario(_)
        | Error::Config(_) => 2,
        Error::NotPositiveDefinite { .. }
        | Error::RankDeficient(_)
        | Error::IrlsNonConvergence(_)
        | Error::InvalidLambda(_)
        | Error::CvFailure(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        varsel::parallel::configure_threads(cli.threads);
    }
    let result = match &cli.command {
        Command::Select(a) => cmd_select(&cli, a),
        Command::Slope(a) => cmd_slope(&cli, a),
        Command::Lasso(a) => cmd_lasso(&cli, a),
        Command::Knockoff(a) => cmd_knockoff(&cli, a),
        Command::Simulate(a) => cmd_simulate(&cli, a),
        Command::Threshold(a) => cmd_threshold(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load(data: &DataArgs) -> Result<Dataset, Error> {
    load_csv(&data.data, &data.response, data.family.into())
}

fn ensure_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("json: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn write_coefficients_csv(
    path: &Path,
    intercept: f64,
    entries: &[SupportEntry],
) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "coefficient"])?;
    w.write_record(["(intercept)", &format!("{intercept:.12e}")])?;
    for e in entries {
        w.write_record([e.name.as_str(), &format!("{:.12e}", e.coefficient)])?;
    }
    w.flush()?;
    Ok(())
}

fn support_entries(d: &Dataset, support: &[usize], coefs: &[f64]) -> Vec<SupportEntry> {
    support
        .iter()
        .zip(coefs)
        .map(|(&j, &c)| SupportEntry {
            index: j,
            name: d.names[j].clone(),
            coefficient: c,
        })
        .collect()
}

fn parse_criterion_spec(
    name: &str,
    p_total: usize,
    a: &SelectArgs,
) -> Result<CriterionSpec, Error> {
    let mut spec = CriterionSpec::new(CriterionKind::parse(name)?, p_total);
    spec.e = a.e;
    spec.constant = a.constant;
    spec.kappa = a.kappa;
    Ok(spec)
}

fn parse_plan(a: &SelectArgs, p_total: usize) -> Result<SearchPlan, Error> {
    if a.plan == "default" {
        let spec = parse_criterion_spec(&a.criterion, p_total, a)?;
        return Ok(SearchPlan::standard(spec));
    }
    let mut stages = Vec::new();
    for part in a.plan.split(',') {
        let (stage, arg) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("bad plan stage {part:?}")))?;
        match stage.trim() {
            "screen" => {
                let threshold: f64 = arg
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad threshold {arg:?}")))?;
                stages.push(SearchStage::Screen { threshold });
            }
            "forward" => stages.push(SearchStage::Forward {
                spec: parse_criterion_spec(arg.trim(), p_total, a)?,
            }),
            "backward" => stages.push(SearchStage::Backward {
                spec: parse_criterion_spec(arg.trim(), p_total, a)?,
            }),
            "stepwise" => stages.push(SearchStage::Stepwise {
                spec: parse_criterion_spec(arg.trim(), p_total, a)?,
            }),
            "forward-steps" => {
                let (crit, count) = arg.split_once(':').ok_or_else(|| {
                    Error::InvalidArgument("forward-steps wants crit:count".into())
                })?;
                stages.push(SearchStage::ForwardSteps {
                    spec: parse_criterion_spec(crit.trim(), p_total, a)?,
                    count: count
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad count {count:?}")))?,
                });
            }
            other => return Err(Error::InvalidArgument(format!("unknown stage {other:?}"))),
        }
    }
    Ok(SearchPlan { stages })
}

fn cmd_select(cli: &Cli, a: &SelectArgs) -> Result<(), Error> {
    let d = load(&a.data)?;
    ensure_out(&a.data.out)?;
    let plan = parse_plan(a, d.p())?;
    let fit = stepwise::select(&d, &plan, SearchOptions::default())?;
    let entries = support_entries(&d, &fit.support, &fit.coefficients);
    let report = SelectionReport {
        criterion: a.criterion.clone(),
        criterion_value: fit.criterion,
        n: d.n(),
        p: d.p(),
        family: family_name(d.family),
        seed: cli.seed,
        intercept: fit.intercept,
        support: entries,
        flags: fit.flags,
        trace: fit.trace,
    };
    write_json(&a.data.out.join("selection.json"), &report)?;
    write_coefficients_csv(
        &a.data.out.join("coefficients.csv"),
        report.intercept,
        &report.support,
    )?;
    eprintln!(
        "selected {} of {} columns (criterion {} = {:.4})",
        report.support.len(),
        report.p,
        report.criterion,
        report.criterion_value
    );
    Ok(())
}

fn family_name(f: Family) -> String {
    match f {
        Family::Gaussian => "gaussian".into(),
        Family::Binomial => "binomial".into(),
    }
}

fn standardize_chain(
    d: &Dataset,
    mode: StandardizeArg,
) -> Result<(Dataset, Standardization), Error> {
    match mode {
        StandardizeArg::None => Ok((d.clone(), Standardization::identity(d.p()))),
        StandardizeArg::Center => standardize(d, StandardizeMode::Center),
        StandardizeArg::CenterUnitL2 => {
            let (c, i1) = standardize(d, StandardizeMode::Center)?;
            let (s, i2) = standardize(&c, StandardizeMode::UnitL2)?;
            Ok((s, i1.then(&i2)))
        }
        StandardizeArg::CenterUnitL2One => {
            let (c, i1) = standardize(d, StandardizeMode::Center)?;
            let (s, i2) = standardize(&c, StandardizeMode::UnitL2One)?;
            Ok((s, i1.then(&i2)))
        }
    }
}

fn slope_sequence(a: &SlopeArgs, n: usize, p: usize) -> Result<LambdaSequence, Error> {
    if let Some(path) = &a.lambda_in {
        let seq = slope::read_lambda_csv(path)?;
        if seq.len() != p {
            return Err(Error::InvalidLambda(format!(
                "imported sequence has length {}, need {p}",
                seq.len()
            )));
        }
        return Ok(seq);
    }
    let rule = match a.rule {
        RuleArg::Bh => LambdaRule::Bh { c: a.c, q: a.q },
        RuleArg::Heuristic => LambdaRule::Heuristic {
            q: a.q,
            sigma: a.sigma,
            n,
        },
        RuleArg::Inflated => LambdaRule::InflatedBh {
            delta: a.delta,
            q: a.q,
        },
        RuleArg::Constant => LambdaRule::Constant { value: a.lambda },
        RuleArg::SecondOrder => LambdaRule::SecondOrder { scale: a.c },
    };
    make_lambda(rule, p)
}

fn restrict(dense: &[f64], support: &[usize]) -> Vec<f64> {
    support.iter().map(|&j| dense[j]).collect()
}

fn cmd_slope(cli: &Cli, a: &SlopeArgs) -> Result<(), Error> {
    let d = load(&a.data)?;
    ensure_out(&a.data.out)?;
    let (sd, info) = standardize_chain(&d, a.standardize)?;

    if a.cv {
        let spec = CvSpec::slope_default(&sd, cli.seed);
        let res = cv_select(&sd, &spec)?;
        write_cv_table_csv(&res, &a.data.out.join("cv_table.csv"))?;
        let (shift, coefs) =
            info.backtransform(&res.support, &restrict(&res.coefficients, &res.support));
        let entries = support_entries(&d, &res.support, &coefs);
        let report = CvReport {
            method: "slope-cv".into(),
            best: res.best.to_string(),
            n: d.n(),
            p: d.p(),
            intercept: shift + res.intercept,
            support: entries,
        };
        write_json(&a.data.out.join("fit.json"), &report)?;
        write_coefficients_csv(
            &a.data.out.join("coefficients.csv"),
            report.intercept,
            &report.support,
        )?;
        eprintln!(
            "cv-slope selected {} ({} nonzero)",
            report.best,
            report.support.len()
        );
        return Ok(());
    }

    let lambda = slope_sequence(a, sd.n(), sd.p())?;
    if let Some(out) = &a.lambda_out {
        slope::write_lambda_csv(&lambda, out)?;
    }

    if let Some(grid) = &a.path {
        let scales: Vec<f64> = grid
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad path scale {s:?}")))
            })
            .collect::<Result<_, _>>()?;
        let path = slope_path(&sd, &lambda, &scales, &SlopeOptions::default())?;
        let mut w = csv::Writer::from_path(a.data.out.join("path.csv"))?;
        w.write_record(["scale", "nonzero", "clusters", "objective", "converged"])?;
        for pt in &path {
            w.write_record([
                format!("{}", pt.scale),
                pt.fit.nonzero_count().to_string(),
                pt.fit.clusters.len().to_string(),
                format!("{:.12e}", pt.fit.objective),
                (pt.fit.converged as u8).to_string(),
            ])?;
        }
        w.flush()?;
        eprintln!("wrote {} path points", path.len());
        return Ok(());
    }

    let fit = fit_slope(&sd, &lambda, &SlopeOptions::default())?;
    let support = fit.support();
    let (shift, coefs) = info.backtransform(&support, &restrict(&fit.coefficients, &support));
    let entries = support_entries(&d, &support, &coefs);
    let report = SlopeReport {
        method: "slope".into(),
        rule: format!("{:?}", lambda.rule),
        n: d.n(),
        p: d.p(),
        family: family_name(d.family),
        objective: fit.objective,
        kkt_residual: fit.kkt_residual,
        iterations: fit.iterations,
        converged: fit.converged,
        intercept: shift + fit.intercept,
        nonzero: support.len(),
        clusters: fit.clusters.len(),
        support: entries,
    };
    write_json(&a.data.out.join("fit.json"), &report)?;
    write_coefficients_csv(
        &a.data.out.join("coefficients.csv"),
        report.intercept,
        &report.support,
    )?;
    eprintln!(
        "slope: {} nonzero in {} clusters, kkt {:.2e}",
        report.nonzero, report.clusters, report.kkt_residual
    );
    Ok(())
}

fn cmd_lasso(cli: &Cli, a: &LassoArgs) -> Result<(), Error> {
    let d = load(&a.data)?;
    ensure_out(&a.data.out)?;
    let (sd, info) = standardize_chain(&d, a.standardize)?;
    if a.cv {
        let spec = CvSpec::lasso_default(&sd, cli.seed);
        let res = cv_select(&sd, &spec)?;
        write_cv_table_csv(&res, &a.data.out.join("cv_table.csv"))?;
        let (shift, coefs) =
            info.backtransform(&res.support, &restrict(&res.coefficients, &res.support));
        let entries = support_entries(&d, &res.support, &coefs);
        let report = CvReport {
            method: "lasso-cv".into(),
            best: res.best.to_string(),
            n: d.n(),
            p: d.p(),
            intercept: shift + res.intercept,
            support: entries,
        };
        write_json(&a.data.out.join("fit.json"), &report)?;
        write_coefficients_csv(
            &a.data.out.join("coefficients.csv"),
            report.intercept,
            &report.support,
        )?;
        eprintln!(
            "cv-lasso selected {} ({} nonzero)",
            report.best,
            report.support.len()
        );
        return Ok(());
    }
    let lambda = a
        .lambda
        .ok_or_else(|| Error::InvalidArgument("pass --lambda or --cv".into()))?;
    let seq = make_lambda(LambdaRule::Constant { value: lambda }, sd.p())?;
    let fit = fit_slope(&sd, &seq, &SlopeOptions::default())?;
    let support = fit.support();
    let (shift, coefs) = info.backtransform(&support, &restrict(&fit.coefficients, &support));
    let entries = support_entries(&d, &support, &coefs);
    let report = SlopeReport {
        method: "lasso".into(),
        rule: format!("constant({lambda})"),
        n: d.n(),
        p: d.p(),
        family: family_name(d.family),
        objective: fit.objective,
        kkt_residual: fit.kkt_residual,
        iterations: fit.iterations,
        converged: fit.converged,
        intercept: shift + fit.intercept,
        nonzero: support.len(),
        clusters: fit.clusters.len(),
        support: entries,
    };
    write_json(&a.data.out.join("fit.json"), &report)?;
    write_coefficients_csv(
        &a.data.out.join("coefficients.csv"),
        report.intercept,
        &report.support,
    )?;
    eprintln!(
        "lasso: {} nonzero, kkt {:.2e}",
        report.nonzero, report.kkt_residual
    );
    Ok(())
}

fn read_sigma_csv(path: &Path, p: usize) -> Result<Array2<f64>, Error> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row: Vec<f64> = rec
            .iter()
            .map(|f| {
                f.parse().map_err(|_| Error::NonNumericCell {
                    column: "sigma".into(),
                    row: i,
                    value: f.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidData(format!(
            "covariance must be {p}x{p} to match the design"
        )));
    }
    let mut m = Array2::<f64>::zeros((p, p));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

fn cmd_knockoff(cli: &Cli, a: &KnockoffArgs) -> Result<(), Error> {
    let d = load(&a.data)?;
    ensure_out(&a.data.out)?;
    let sigma = read_sigma_csv(&a.sigma, d.p())?;
    let mut rng = RngStream::new(cli.seed, 0);
    let res = knockoffs::knockoff_filter(&d, &sigma.view(), a.q, &mut rng, cli.seed)?;
    let mut w = csv::Writer::from_path(a.data.out.join("w.csv"))?;
    w.write_record(["name", "w"])?;
    for (j, wv) in res.w.iter().enumerate() {
        w.write_record([d.names[j].as_str(), &format!("{wv:.12e}")])?;
    }
    w.flush()?;
    let report = KnockoffReport {
        q: a.q,
        threshold: res.threshold,
        selected: res
            .selected
            .iter()
            .map(|&j| SupportEntry {
                index: j,
                name: d.names[j].clone(),
                coefficient: res.w[j],
            })
            .collect(),
    };
    write_json(&a.data.out.join("knockoff.json"), &report)?;
    eprintln!(
        "knockoff filter at q={}: {} selections (threshold {})",
        a.q,
        report.selected.len(),
        report.threshold
    );
    Ok(())
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<(), Error> {
    if a.list {
        for s in sim::builtin_scenarios() {
            println!(
                "{}: n={} p={} k={} replicates={} methods={}",
                s.name,
                s.n,
                s.p(),
                s.k(),
                s.replicates,
                s.methods
                    .iter()
                    .map(|m| m.name())
                    .collect::<Vec<_>>()
                    .join(",")
            );
        }
        return Ok(());
    }
    let mut spec = match (&a.scenario, &a.config) {
        (Some(name), None) => sim::builtin_scenario(name, a.n, a.rho, a.k)?,
        (None, Some(path)) => sim::read_scenario_file(path)?,
        _ => {
            return Err(Error::InvalidArgument(
                "pass exactly one of --scenario or --config".into(),
            ))
        }
    };
    spec.seed = cli.seed;
    let out = a
        .out
        .clone()
        .ok_or_else(|| Error::InvalidArgument("--out is required".into()))?;
    ensure_out(&out)?;
    let report = sim::run_scenario(&spec, a.replicates)?;
    sim::write_aggregate_csv(&report, out.join("aggregate.csv"))?;
    sim::write_records_csv(&report, out.join("records.csv"))?;
    sim::write_long_csv(&report, out.join("long.csv"))?;
    for m in &report.per_method {
        eprintln!(
            "{:>18}: fdr {:.3} fwer {:.3} power {} misclass {:.2} ({} reps, {} failed)",
            m.method,
            m.fdr.mean,
            m.fwer.mean,
            if m.power.count > 0 {
                format!("{:.3}", m.power.mean)
            } else {
                "-".into()
            },
            m.misclassifications.mean,
            m.replicates,
            m.failures,
        );
    }
    Ok(())
}

fn cmd_threshold(_cli: &Cli, a: &ThresholdArgs) -> Result<(), Error> {
    let d = load(&a.data)?;
    ensure_out(&a.data.out)?;
    let text = std::fs::read_to_string(&a.fit)?;
    let fit: FitFile = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("fit file: {e}")))?;
    let start: Vec<usize> = fit.support.iter().map(|e| e.index).collect();
    if start.iter().any(|&j| j >= d.p()) {
        return Err(Error::InvalidArgument(
            "fit support exceeds data columns".into(),
        ));
    }
    let p_total = a.p_total.unwrap_or(d.p());
    let spec = CriterionSpec::new(CriterionKind::parse(&a.criterion)?, p_total);

    // Backward elimination on the centered scale for gaussian data.
    let (work, info) = match d.family {
        Family::Gaussian => standardize(&d, StandardizeMode::Center)?,
        Family::Binomial => (d.clone(), Standardization::identity(d.p())),
    };
    let reduced = stepwise::backward(&work, &spec, &start, SearchOptions::default())?;
    let (intercept, coefs) = match d.family {
        Family::Gaussian => info.backtransform(&reduced.support, &reduced.coefficients),
        Family::Binomial => (reduced.intercept, reduced.coefficients.clone()),
    };
    let entries = support_entries(&d, &reduced.support, &coefs);
    let report = SelectionReport {
        criterion: a.criterion.clone(),
        criterion_value: reduced.criterion,
        n: d.n(),
        p: d.p(),
        family: family_name(d.family),
        seed: 0,
        intercept,
        support: entries,
        flags: reduced.flags,
        trace: reduced.trace,
    };
    write_json(&a.data.out.join("selection.json"), &report)?;
    write_coefficients_csv(
        &a.data.out.join("coefficients.csv"),
        report.intercept,
        &report.support,
    )?;
    eprintln!(
        "threshold: {} -> {} columns (criterion {} = {:.4})",
        start.len(),
        report.support.len(),
        report.criterion,
        report.criterion_value
    );
    Ok(())
}
