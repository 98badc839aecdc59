use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kernelcost::ir::{parse_kernel_with, KernelIR};
use kernelcost::model::{predict, read_measurements, write_measurements, ModelWeights};
use kernelcost::pipeline::{evaluate_records, fit_records};
use kernelcost::props::{check_binding, extract_properties_with, DEFAULT_CAP};
use kernelcost::sim::{run_campaign, SimDevice};
use kernelcost::suite::{Role, Suite, DEFAULT_PROFILE};
use kernelcost::symcount::{access_footprint, fill_footprint, CountExpr, Facts};
use kernelcost::{Binding, Error, GroupConfig, Result};

/// Operation counting, fitting and prediction for array kernels.
#[derive(Debug, Parser)]
#[command(name = "kernelcost", version)]
struct Cli {
    /// Seed of the simulated device's noise stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Most statement instances to enumerate where counting falls back.
    #[arg(long, global = true, default_value_t = DEFAULT_CAP)]
    cap: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Shorthand for `--format pretty`.
    #[arg(long, global = true)]
    pretty: bool,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Pretty,
}

#[derive(Debug, clap::Args)]
struct KernelArgs {
    /// A kernel file, or the id of a suite kernel.
    kernel: String,
    /// Parameter values such as `n=1024;m=512`; may repeat.
    #[arg(long = "bind", short = 'b')]
    bind: Vec<String>,
    /// Work-group shape (`256` or `16x16`) setting the `gs0`/`gs1` constants.
    #[arg(long)]
    group: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Property counts of a kernel, symbolic unless bound.
    Count {
        #[command(flatten)]
        k: KernelArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Distinct cells touched per array.
    Footprint {
        #[command(flatten)]
        k: KernelArgs,
        /// Only this array.
        #[arg(long)]
        array: Option<String>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Fits per-property weights to a measurement CSV.
    Fit {
        csv: PathBuf,
        /// Suite directory the CSV's kernels come from.
        #[arg(long)]
        kernels: Option<PathBuf>,
        #[arg(long, default_value = "device")]
        device: String,
        /// Weights file to write; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Predicted run time of a bound kernel.
    Predict {
        #[command(flatten)]
        k: KernelArgs,
        #[arg(long, short)]
        weights: PathBuf,
        /// Include the per-property contributions.
        #[arg(long)]
        breakdown: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Times suite cases on a simulated device and writes a measurement CSV.
    Simulate {
        /// Device file `{name, sigma, seed, weights}`; the built-in R9 Fury weights when absent.
        #[arg(long)]
        device: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = RoleArg::Measurement)]
        role: RoleArg,
        #[arg(long, default_value = DEFAULT_PROFILE)]
        profile: String,
        /// Overrides the device's noise level.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Per-kernel and cross-kernel geometric-mean errors of a weights file.
    Eval {
        weights: PathBuf,
        csv: PathBuf,
        #[arg(long)]
        kernels: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Bundled kernel suite.
    Suite {
        #[command(subcommand)]
        command: SuiteCommand,
    },
}

#[derive(Debug, Subcommand)]
enum SuiteCommand {
    /// Writes the manifest and kernel sources into a directory.
    Emit { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoleArg {
    Measurement,
    Test,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::Measurement => Role::Measurement,
            RoleArg::Test => Role::Test,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NeedsBinding(_) | Error::NeedsFallback(_) => 3,
        Error::SchemaMismatch { .. } => 4,
        Error::UnboundParam(_)
        | Error::AssumptionViolated { .. }
        | Error::CapExceeded { .. }
        | Error::Overflow(_) => 2,
        e if e.is_kernel_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", diagnostic(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error message, prefixed with its code unless it already starts with one.
fn diagnostic(e: &Error) -> String {
    let msg = e.to_string();
    if msg.starts_with("E_") {
        msg
    } else {
        format!("{}: {msg}", e.code())
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn pretty(&self) -> bool {
        self.cli.pretty || self.cli.format == Format::Pretty
    }

    /// Writes `text` to `path` through a temporary file in the same directory,
    /// or to stdout.
    fn emit(&self, path: Option<&Path>, text: &str) -> Result<()> {
        match path {
            Some(p) => write_atomic(p, text.as_bytes(), self.cli.force),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }

    fn report(
        &self,
        path: Option<&Path>,
        v: &Value,
        pretty: impl FnOnce() -> String,
    ) -> Result<()> {
        let text = if self.pretty() {
            pretty()
        } else {
            serde_json::to_string_pretty(v)? + "\n"
        };
        self.emit(path, &text)
    }
}

fn write_atomic(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(exists(path));
    }
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    if force {
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    } else {
        tmp.persist_noclobber(path)
            .map_err(|e| match e.error.kind() {
                std::io::ErrorKind::AlreadyExists => exists(path),
                _ => Error::Io(e.error),
            })?;
    }
    Ok(())
}

fn exists(path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::AlreadyExists,
        format!("{} exists; pass --force to overwrite", path.display()),
    ))
}

fn run(cli: &Cli) -> Result<u8> {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::Count { k, output } => count(&ctx, k, output.as_deref()),
        Command::Footprint { k, array, output } => {
            footprint(&ctx, k, array.as_deref(), output.as_deref())
        }
        Command::Fit {
            csv,
            kernels,
            device,
            output,
        } => fit(&ctx, csv, kernels.as_deref(), device, output.as_deref()),
        Command::Predict {
            k,
            weights,
            breakdown,
            output,
        } => predict_cmd(&ctx, k, weights, *breakdown, output.as_deref()),
        Command::Simulate {
            device,
            role,
            profile,
            sigma,
            output,
        } => simulate(
            &ctx,
            device.as_deref(),
            (*role).into(),
            profile,
            *sigma,
            output.as_deref(),
        ),
        Command::Eval {
            weights,
            csv,
            kernels,
            output,
        } => eval(&ctx, weights, csv, kernels.as_deref(), output.as_deref()),
        Command::Suite {
            command: SuiteCommand::Emit { dir },
        } => suite_emit(&ctx, dir),
    }
}

fn load_suite(dir: Option<&Path>) -> Result<Suite> {
    match dir {
        Some(d) => Suite::from_dir(d),
        None => Suite::from_env(),
    }
}

fn binding_of(args: &KernelArgs) -> Result<Option<Binding>> {
    if args.bind.is_empty() {
        return Ok(None);
    }
    let mut b = Binding::new();
    for part in &args.bind {
        for (k, v) in part.parse::<Binding>()?.iter() {
            b.set(k, v);
        }
    }
    Ok(Some(b))
}

/// Parses a kernel file, or instantiates a suite kernel when no such file exists.
fn load_kernel(args: &KernelArgs) -> Result<KernelIR> {
    let group: Option<GroupConfig> = args.group.as_deref().map(str::parse).transpose()?;
    let overrides = group.map(|g| g.overrides()).unwrap_or_default();
    let path = Path::new(&args.kernel);
    if path.exists() {
        return parse_kernel_with(&std::fs::read_to_string(path)?, &overrides);
    }
    let suite = Suite::from_env()?;
    if suite.kernel(&args.kernel).is_err()
        && (args.kernel.contains(['/', '\\']) || args.kernel.ends_with(".knl"))
    {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )));
    }
    let group = match group {
        Some(g) => g,
        None => suite.groups_for(&args.kernel, DEFAULT_PROFILE)?[0],
    };
    suite.instantiate(&args.kernel, group)
}

fn count_value(c: &CountExpr) -> Value {
    match c.as_integer() {
        Some(i) => match u64::try_from(&i) {
            Ok(u) => json!(u),
            Err(_) => json!(i.to_string()),
        },
        None => json!(c.to_prefix()),
    }
}

fn count_text(c: &CountExpr) -> String {
    match c.as_integer() {
        Some(i) => i.to_string(),
        None => c.to_prefix(),
    }
}

fn table(rows: &[(String, String)]) -> String {
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<w$}  {v}\n"))
        .collect()
}

fn count(ctx: &Ctx, args: &KernelArgs, out: Option<&Path>) -> Result<u8> {
    let k = load_kernel(args)?;
    let b = binding_of(args)?;
    let pv = extract_properties_with(&k, b.as_ref(), ctx.cli.cap)?;
    ctx.report(out, &pv.to_report(), || {
        let mut rows = vec![("kernel".to_string(), pv.kernel.clone())];
        if let Some(b) = &b {
            rows.push(("binding".into(), b.to_string()));
        }
        rows.extend(
            pv.iter()
                .filter(|(_, v)| !v.is_zero())
                .map(|(key, v)| (key.to_string(), count_text(v))),
        );
        table(&rows)
    })?;
    Ok(0)
}

fn footprint(ctx: &Ctx, args: &KernelArgs, only: Option<&str>, out: Option<&Path>) -> Result<u8> {
    let k = load_kernel(args)?;
    let b = binding_of(args)?;
    if let Some(b) = &b {
        check_binding(&k, b)?;
    }
    let facts = Facts::from_kernel(&k);
    let names: Vec<&str> = match only {
        Some(a) => vec![a],
        None => k.arrays.iter().map(|a| a.name.as_str()).collect(),
    };
    let mut arrays = Vec::new();
    let mut rows = Vec::new();
    for name in names {
        let f = access_footprint(&k, &facts, name, b.as_ref(), ctx.cli.cap)?;
        let (size, filled) = (f.size().clone(), fill_footprint(&f));
        let (size, filled) = match &b {
            Some(b) => (bound(&size, b)?, bound(&filled, b)?),
            None => (size, filled),
        };
        rows.push((
            name.to_string(),
            format!(
                "{} cells, {} filled",
                count_text(&size),
                count_text(&filled)
            ),
        ));
        let axes = f.axes.as_ref().map(|axes| {
            axes.iter()
                .map(|a| json!({"min": count_value(&a.min), "step": a.step.to_string(), "count": count_value(&a.count)}))
                .collect::<Vec<_>>()
        });
        arrays.push(json!({
            "array": name,
            "fast_axis": f.fast_axis,
            "size": count_value(&size),
            "filled": count_value(&filled),
            "axes": axes,
        }));
    }
    let mut report = json!({"kernel": k.name, "arrays": arrays});
    if let Some(b) = &b {
        report["binding"] = serde_json::to_value(b)?;
    }
    ctx.report(out, &report, || table(&rows))?;
    Ok(0)
}

fn bound(c: &CountExpr, b: &Binding) -> Result<CountExpr> {
    c.eval_i64(&|p| b.get(p))
        .map(CountExpr::from_bigint)
        .ok_or_else(|| {
            Error::NeedsBinding(format!("`{}` does not evaluate at `{b}`", c.to_prefix()))
        })
}

fn read_csv(path: &Path) -> Result<Vec<kernelcost::model::MeasurementRecord>> {
    read_measurements(std::fs::File::open(path)?)
}

fn load_weights(path: &Path) -> Result<ModelWeights> {
    let text = std::fs::read_to_string(path)?;
    ModelWeights::from_json(&serde_json::from_str(&text)?)
}

fn fit(
    ctx: &Ctx,
    csv: &Path,
    kernels: Option<&Path>,
    device: &str,
    out: Option<&Path>,
) -> Result<u8> {
    let suite = load_suite(kernels)?;
    let records = read_csv(csv)?;
    let (w, report, _) = fit_records(&suite, &records, device, ctx.cli.cap)?;
    let summary = json!({
        "device": device,
        "n_cases": records.len(),
        "objective": report.objective,
        "rank": report.rank,
        "condition": report.condition,
        "uncovered": report.uncovered,
    });
    let weights = serde_json::to_string_pretty(&w.to_json())? + "\n";
    match out {
        Some(p) => {
            write_atomic(p, weights.as_bytes(), ctx.cli.force)?;
            ctx.report(None, &summary, || {
                table(&[
                    ("cases".into(), records.len().to_string()),
                    ("objective".into(), format!("{:.3e}", report.objective)),
                    ("rank".into(), report.rank.to_string()),
                    ("condition".into(), format!("{:.3e}", report.condition)),
                    ("uncovered".into(), report.uncovered.len().to_string()),
                ])
            })?;
        }
        None => {
            eprintln!(
                "fitted {} cases: objective {:.3e}, rank {}, {} uncovered properties",
                records.len(),
                report.objective,
                report.rank,
                report.uncovered.len()
            );
            if ctx.pretty() {
                let rows: Vec<_> = kernelcost::props::schema()
                    .iter()
                    .zip(&w.weights)
                    .zip(&w.covered)
                    .filter(|(_, c)| **c)
                    .map(|((k, v), _)| (k.clone(), format!("{v:.4e}")))
                    .collect();
                ctx.emit(None, &table(&rows))?;
            } else {
                ctx.emit(None, &weights)?;
            }
        }
    }
    Ok(0)
}

fn predict_cmd(
    ctx: &Ctx,
    args: &KernelArgs,
    weights: &Path,
    breakdown: bool,
    out: Option<&Path>,
) -> Result<u8> {
    let w = load_weights(weights)?;
    let k = load_kernel(args)?;
    let b = binding_of(args)?
        .ok_or_else(|| Error::NeedsBinding(format!("predicting `{}` needs --bind", k.name)))?;
    let pv = extract_properties_with(&k, Some(&b), ctx.cli.cap)?;
    let p = predict(&w, &pv)?;
    for warning in &p.warnings {
        eprintln!("warning: {warning}");
    }
    let mut report = json!({
        "kernel": k.name,
        "binding": serde_json::to_value(&b)?,
        "device": w.device,
        "seconds": p.seconds,
        "warnings": p.warnings,
    });
    if breakdown {
        report["breakdown"] = p
            .breakdown
            .iter()
            .map(|(key, s)| json!({"property": key, "seconds": s}))
            .collect();
    }
    ctx.report(out, &report, || {
        let mut rows = vec![("total".to_string(), format!("{:.6e} s", p.seconds))];
        if breakdown {
            rows.extend(
                p.breakdown
                    .iter()
                    .map(|(key, s)| (key.clone(), format!("{s:.6e} s"))),
            );
        }
        table(&rows)
    })?;
    Ok(0)
}

fn simulate(
    ctx: &Ctx,
    device: Option<&Path>,
    role: Role,
    profile: &str,
    sigma: Option<f64>,
    out: Option<&Path>,
) -> Result<u8> {
    let mut dev = match device {
        Some(p) => SimDevice::load(p)?,
        None => SimDevice::r9_fury(),
    };
    if let Some(s) = sigma {
        dev.sigma = s;
    }
    if let Some(seed) = ctx.cli.seed {
        dev.seed = seed;
    }
    if !(dev.sigma >= 0.0 && dev.sigma.is_finite()) {
        return Err(Error::Format(format!(
            "sigma must be finite and >= 0, got {}",
            dev.sigma
        )));
    }
    let suite = Suite::from_env()?;
    let cases = suite.cases(role, profile)?;
    let (records, errors) = run_campaign(&dev, &suite, &cases, |_, _| {});
    let mut buf = Vec::new();
    write_measurements(&mut buf, &records)?;
    ctx.emit(out, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    eprintln!(
        "simulated {} of {} cases on `{}`",
        records.len(),
        cases.len(),
        dev.name
    );
    for e in &errors {
        eprintln!(
            "error: `{}` at `{}` with group {}: {}",
            e.case.kernel,
            e.case.binding,
            e.case.group,
            diagnostic(&e.error)
        );
    }
    Ok(errors.first().map_or(0, |e| exit_code(&e.error)))
}

fn eval(
    ctx: &Ctx,
    weights: &Path,
    csv: &Path,
    kernels: Option<&Path>,
    out: Option<&Path>,
) -> Result<u8> {
    let suite = load_suite(kernels)?;
    let w = load_weights(weights)?;
    let records = read_csv(csv)?;
    let report = evaluate_records(&suite, &w, &records, ctx.cli.cap)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    ctx.report(out, &report.to_json(), || {
        let mut rows: Vec<_> = report
            .kernels
            .iter()
            .map(|k| {
                (
                    k.kernel.clone(),
                    format!("{:.4}  ({} cases)", k.geomean, k.cases),
                )
            })
            .collect();
        rows.push(("cross-kernel".into(), format!("{:.4}", report.cross_kernel)));
        table(&rows)
    })?;
    Ok(0)
}

fn suite_emit(ctx: &Ctx, dir: &Path) -> Result<u8> {
    let suite = Suite::from_env()?;
    let files = suite.files();
    std::fs::create_dir_all(dir)?;
    if !ctx.cli.force {
        if let Some((name, _)) = files.iter().find(|(name, _)| dir.join(name).exists()) {
            return Err(exists(&dir.join(name)));
        }
    }
    for (name, text) in &files {
        write_atomic(&dir.join(name), text.as_bytes(), ctx.cli.force)?;
        println!("{}", dir.join(name).display());
    }
    Ok(0)
}
