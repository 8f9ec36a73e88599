//! Run configuration: command-line flags layered over an optional flat
//! `key = value` config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use twostep::bandwidth::DEFAULT_GRID_SIZE;
use twostep::estimators::DEFAULT_TRIM;
use twostep::montecarlo::{Arm, BandwidthPolicy, Family, DEFAULT_REPS};

use crate::data::Roles;
use crate::{usage, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// MAE, MSE and RMSE per arm and cell.
    McTable,
    /// Confidence interval coverage of the first coefficient.
    McCoverage,
    /// Paired gap between plug-in estimates at the estimated and true index.
    Theorem1Gap,
    /// Linearization remainder of the SNN-weighted average.
    Bahadur,
    /// Sample-selection estimator on a CSV file.
    EstimateSelection,
    /// Matching estimator of the effect on the treated on a CSV file.
    EstimateMatching,
    /// Writes a simulated selection sample as CSV.
    Generate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::McTable => "mc-table",
            Command::McCoverage => "mc-coverage",
            Command::Theorem1Gap => "theorem1-gap",
            Command::Bahadur => "bahadur",
            Command::EstimateSelection => "estimate-selection",
            Command::EstimateMatching => "estimate-matching",
            Command::Generate => "generate",
        }
    }

    fn is_simulation(self) -> bool {
        !matches!(self, Command::EstimateSelection | Command::EstimateMatching)
    }

    /// Keys a command accepts, in echo order.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Command::McTable | Command::McCoverage => &[
                "spec", "k", "n", "reps", "seed", "arms", "bandwidth", "grid", "n-starts", "format",
                "output",
            ],
            Command::Theorem1Gap => &[
                "spec", "k", "n", "reps", "seed", "compare", "bandwidth", "grid", "n-starts",
                "format", "output",
            ],
            Command::Bahadur => &["n", "reps", "seed", "bandwidth", "format", "output"],
            Command::EstimateSelection => &[
                "input", "col", "first-stage", "bandwidth", "grid", "n-starts", "seed", "format",
                "output",
            ],
            Command::EstimateMatching => &[
                "input", "col", "first-stage", "bandwidth", "grid", "n-starts", "seed", "trim",
                "format", "output",
            ],
            Command::Generate => &["spec", "k", "n", "seed", "output"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FirstStage {
    MaxScore,
    Probit,
    Fixed(Vec<f64>),
}

impl FirstStage {
    pub fn label(&self) -> String {
        match self {
            FirstStage::MaxScore => "maxscore".into(),
            FirstStage::Probit => "probit".into(),
            FirstStage::Fixed(v) => format!(
                "fixed:{}",
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":")
            ),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "twostep", version, about = "Two-step semiparametric estimators and their Monte Carlo harness")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// DGP families, comma separated: AN, AT, BN, BT.
    #[arg(long)]
    pub spec: Option<String>,
    /// Covariate dimensions, comma separated (3 or 6).
    #[arg(long)]
    pub k: Option<String>,
    /// Sample sizes, comma separated.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    /// Master seed; required by simulation commands.
    #[arg(long)]
    pub seed: Option<String>,
    /// Arms, comma separated: theta0, thetahat, nobc.
    #[arg(long)]
    pub arms: Option<String>,
    /// Index direction compared with θ₀ by theorem1-gap: thetahat or theta0.
    #[arg(long)]
    pub compare: Option<String>,
    /// `cv` or a fixed bandwidth.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Cross-validation grid size.
    #[arg(long)]
    pub grid: Option<String>,
    /// Maximum-score multi-start count.
    #[arg(long = "n-starts")]
    pub n_starts: Option<String>,
    /// First stages, comma separated: maxscore, probit, fixed:v1:v2:...
    #[arg(long = "first-stage")]
    pub first_stage: Option<String>,
    /// Propensity trimming for estimate-matching.
    #[arg(long)]
    pub trim: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Column roles, repeatable: y=<name>, d=<name>, z=<a,b>, x=<a,b>.
    #[arg(long)]
    pub col: Vec<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub families: Vec<Family>,
    pub ks: Vec<usize>,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub seed: Option<u64>,
    pub arms: Vec<Arm>,
    pub compare: Arm,
    pub bandwidth: BandwidthPolicy,
    pub grid: usize,
    pub n_starts: usize,
    pub first_stages: Vec<FirstStage>,
    pub trim: f64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub roles: Roles,
    pub format: Format,
}

type Entries = BTreeMap<String, Vec<String>>;

const ALL_KEYS: [&str; 16] = [
    "spec", "k", "n", "reps", "seed", "arms", "compare", "bandwidth", "grid", "n-starts",
    "first-stage", "trim", "input", "output", "col", "format",
];

/// Parses a config file body. `col` may repeat; other keys may not.
pub fn parse_config_file(text: &str) -> Result<Entries> {
    let mut out = Entries::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return usage(format!("config line {}: expected `key = value`, got `{line}`", i + 1));
        };
        let key = key.trim().to_string();
        if command_from_key(&key) {
            continue;
        }
        if !ALL_KEYS.contains(&key.as_str()) {
            return usage(format!("config line {}: unknown key `{key}`", i + 1));
        }
        let entry = out.entry(key.clone()).or_default();
        if key != "col" && !entry.is_empty() {
            return usage(format!("config line {}: duplicate key `{key}`", i + 1));
        }
        entry.push(value.trim().to_string());
    }
    Ok(out)
}

/// The echo starts with a `command = ...` line, which a config file may carry.
fn command_from_key(key: &str) -> bool {
    key == "command"
}

fn flag_entries(cli: &Cli) -> Entries {
    let mut out = Entries::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.insert(k.to_string(), vec![v]);
        }
    };
    put("spec", cli.spec.clone());
    put("k", cli.k.clone());
    put("n", cli.n.clone());
    put("reps", cli.reps.clone());
    put("seed", cli.seed.clone());
    put("arms", cli.arms.clone());
    put("compare", cli.compare.clone());
    put("bandwidth", cli.bandwidth.clone());
    put("grid", cli.grid.clone());
    put("n-starts", cli.n_starts.clone());
    put("first-stage", cli.first_stage.clone());
    put("trim", cli.trim.clone());
    put("input", cli.input.as_ref().map(|p| p.display().to_string()));
    put("output", cli.output.as_ref().map(|p| p.display().to_string()));
    put(
        "format",
        cli.format.map(|f| match f {
            Format::Text => "text".to_string(),
            Format::Csv => "csv".to_string(),
        }),
    );
    if !cli.col.is_empty() {
        out.insert("col".into(), cli.col.clone());
    }
    out
}

/// Parses `argv` (program name first). The config file named by `--config`
/// is read from disk unless `config_text` supplies its contents.
pub fn parse_config<I, T>(argv: I, config_text: Option<&str>) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut entries = match (config_text, &cli.config) {
        (Some(text), _) => parse_config_file(text)?,
        (None, Some(path)) => parse_config_file(&std::fs::read_to_string(path)?)?,
        (None, None) => Entries::new(),
    };
    entries.extend(flag_entries(&cli));
    resolve(cli.command, &entries)
}

fn single<'a>(e: &'a Entries, key: &str) -> Option<&'a str> {
    e.get(key).and_then(|v| v.first()).map(|s| s.as_str())
}

fn parse_list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return usage(format!("`{key}` needs at least one value"));
    }
    items
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| CliError::Usage(format!("`{key}`: {e}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse::<T>()
        .map_err(|e| CliError::Usage(format!("`{key}` = `{raw}`: {e}")))
}

fn parse_first_stage(raw: &str) -> Result<Vec<FirstStage>> {
    // `fixed:` values use `:` so that stages can be comma separated.
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.to_ascii_lowercase().as_str() {
            "maxscore" => Ok(FirstStage::MaxScore),
            "probit" => Ok(FirstStage::Probit),
            other => match other.strip_prefix("fixed:") {
                Some(vals) => Ok(FirstStage::Fixed(parse_list_sep("first-stage", vals, ':')?)),
                None => usage(format!(
                    "unknown first stage `{s}`; expected maxscore, probit or fixed:<v1>:<v2>:..."
                )),
            },
        })
        .collect()
}

fn parse_list_sep(key: &str, raw: &str, sep: char) -> Result<Vec<f64>> {
    raw.split(sep).map(|s| parse_one(key, s)).collect()
}

fn resolve(command: Command, e: &Entries) -> Result<RunConfig> {
    for key in e.keys() {
        if !command.keys().contains(&key.as_str()) {
            return usage(format!("`{key}` is not used by {}", command.name()));
        }
    }
    let default_ns: &[usize] = match command {
        Command::Theorem1Gap => &[300, 1000, 3000],
        Command::Bahadur => &[200, 800, 3200],
        _ => &[1000],
    };
    let default_reps = match command {
        Command::Theorem1Gap => 300,
        Command::Bahadur => 100,
        _ => DEFAULT_REPS,
    };
    let default_arms: &[Arm] = match command {
        Command::McCoverage => &[Arm::PluginTheta0, Arm::PluginThetaHat],
        _ => &Arm::ALL,
    };

    let families = match single(e, "spec") {
        Some(raw) => parse_list::<Family>("spec", raw)?,
        None => vec![Family::AN],
    };
    let ks = match single(e, "k") {
        Some(raw) => parse_list::<usize>("k", raw)?,
        None => vec![3],
    };
    if let Some(bad) = ks.iter().find(|k| !matches!(k, 3 | 6)) {
        return usage(format!("`k` must be 3 or 6, got {bad}"));
    }
    let ns = match single(e, "n") {
        Some(raw) => parse_list::<usize>("n", raw)?,
        None => default_ns.to_vec(),
    };
    if command == Command::Generate && (families.len() != 1 || ks.len() != 1 || ns.len() != 1) {
        return usage("generate takes exactly one spec, k and n");
    }
    let reps = match single(e, "reps") {
        Some(raw) => parse_one::<usize>("reps", raw)?,
        None => default_reps,
    };
    if reps == 0 {
        return usage("`reps` must be at least 1");
    }
    let seed = single(e, "seed").map(|raw| parse_one::<u64>("seed", raw)).transpose()?;
    if command.is_simulation() && seed.is_none() {
        return usage(format!("{} requires --seed", command.name()));
    }
    let arms = match single(e, "arms") {
        Some(raw) => parse_list::<Arm>("arms", raw)?,
        None => default_arms.to_vec(),
    };
    let compare = match single(e, "compare") {
        Some(raw) => parse_one::<Arm>("compare", raw)?,
        None => Arm::PluginThetaHat,
    };
    if compare == Arm::NoCorrection {
        return usage("`compare` must be theta0 or thetahat");
    }
    let grid = match single(e, "grid") {
        Some(raw) => parse_one::<usize>("grid", raw)?,
        None => DEFAULT_GRID_SIZE,
    };
    let bandwidth = match single(e, "bandwidth") {
        None => BandwidthPolicy::Cv { grid },
        Some(raw) if raw.trim().eq_ignore_ascii_case("cv") => BandwidthPolicy::Cv { grid },
        Some(raw) => {
            let h = parse_one::<f64>("bandwidth", raw)?;
            if !(h > 0.0 && h.is_finite()) {
                return usage(format!("`bandwidth` must be `cv` or a positive number, got {raw}"));
            }
            BandwidthPolicy::Fixed(h)
        }
    };
    if command == Command::Bahadur && matches!(bandwidth, BandwidthPolicy::Cv { .. }) && e.contains_key("bandwidth") {
        return usage("bahadur takes a fixed bandwidth or none (default c n^{-1/3})");
    }
    let n_starts = match single(e, "n-starts") {
        Some(raw) => parse_one::<usize>("n-starts", raw)?,
        None => twostep::SearchConfig::default().n_starts,
    };
    let first_stages = match single(e, "first-stage") {
        Some(raw) => parse_first_stage(raw)?,
        None => vec![FirstStage::MaxScore],
    };
    if first_stages.is_empty() {
        return usage("`first-stage` needs at least one value");
    }
    let trim = match single(e, "trim") {
        Some(raw) => parse_one::<f64>("trim", raw)?,
        None => DEFAULT_TRIM,
    };
    let format = match single(e, "format") {
        Some(raw) => Format::from_str(raw, true).map_err(|_| CliError::Usage(format!("unknown format `{raw}`; expected text or csv")))?,
        None => Format::Text,
    };
    let input = single(e, "input").map(PathBuf::from);
    let output = single(e, "output").map(PathBuf::from);
    let roles = match e.get("col") {
        Some(cols) => Roles::parse(cols)?,
        None => Roles::default(),
    };
    match command {
        Command::EstimateSelection | Command::EstimateMatching => {
            if input.is_none() {
                return usage(format!("{} requires --input", command.name()));
            }
            roles.check(command == Command::EstimateMatching)?;
        }
        Command::Generate if output.is_none() => return usage("generate requires --output"),
        _ => {}
    }
    Ok(RunConfig {
        command,
        families,
        ks,
        ns,
        reps,
        seed,
        arms,
        compare,
        bandwidth,
        grid,
        n_starts,
        first_stages,
        trim,
        input,
        output,
        roles,
        format,
    })
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Effective configuration in config-file syntax; feeding it back with
    /// `--config` reproduces the run.
    pub fn echo(&self) -> String {
        let mut out = format!("command = {}\n", self.command.name());
        for key in self.command.keys() {
            let value = match *key {
                "spec" => Some(join(&self.families)),
                "k" => Some(join(&self.ks)),
                "n" => Some(join(&self.ns)),
                "reps" => Some(self.reps.to_string()),
                "seed" => self.seed.map(|s| s.to_string()),
                "arms" => Some(join(&self.arms)),
                "compare" => Some(self.compare.to_string()),
                "bandwidth" => match self.bandwidth {
                    BandwidthPolicy::Cv { .. } if self.command == Command::Bahadur => None,
                    BandwidthPolicy::Cv { .. } => Some("cv".into()),
                    BandwidthPolicy::Fixed(h) => Some(h.to_string()),
                },
                "grid" => Some(self.grid.to_string()),
                "n-starts" => Some(self.n_starts.to_string()),
                "first-stage" => Some(
                    self.first_stages.iter().map(|f| f.label()).collect::<Vec<_>>().join(","),
                ),
                "trim" => Some(self.trim.to_string()),
                "input" => self.input.as_ref().map(|p| p.display().to_string()),
                "output" => self.output.as_ref().map(|p| p.display().to_string()),
                "format" => Some(
                    match self.format {
                        Format::Text => "text",
                        Format::Csv => "csv",
                    }
                    .into(),
                ),
                "col" => {
                    for line in self.roles.to_entries() {
                        let _ = writeln!(out, "col = {line}");
                    }
                    None
                }
                _ => None,
            };
            if let Some(v) = value {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }
}
