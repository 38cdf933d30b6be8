//! Flat `key = value` experiment configs with strict schema checking.
//!
//! Unknown keys are rejected, every diagnostic names the offending field,
//! and `validate` runs the full schema and guard checks without any
//! computation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mpsntk_core::error::{Error, Result};
use mpsntk_core::features::FeatureMap;
use mpsntk_core::flow::Integrator;
use mpsntk_core::stats::splitmix64;

/// Experiment kinds exposed as CLI subcommands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    NtkConverge,
    PdCheck,
    RmseFlow,
    LazyTrain,
    BornFlow,
    ZDist,
    GpTest,
    EnsembleCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::NtkConverge => "ntk-converge",
            ExperimentKind::PdCheck => "pd-check",
            ExperimentKind::RmseFlow => "rmse-flow",
            ExperimentKind::LazyTrain => "lazy-train",
            ExperimentKind::BornFlow => "born-flow",
            ExperimentKind::ZDist => "z-dist",
            ExperimentKind::GpTest => "gp-test",
            ExperimentKind::EnsembleCheck => "ensemble-check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ntk-converge" => ExperimentKind::NtkConverge,
            "pd-check" => ExperimentKind::PdCheck,
            "rmse-flow" => ExperimentKind::RmseFlow,
            "lazy-train" => ExperimentKind::LazyTrain,
            "born-flow" => ExperimentKind::BornFlow,
            "z-dist" => ExperimentKind::ZDist,
            "gp-test" => ExperimentKind::GpTest,
            "ensemble-check" => ExperimentKind::EnsembleCheck,
            _ => return None,
        })
    }
}

/// Feature-map choice from a config value.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSpec {
    Trig,
    Born,
    Fourier { width: usize, tau: f64 },
}

impl FeatureSpec {
    /// Build per-site maps; random-fourier sites get seeds derived from
    /// the run seed and the site index.
    pub fn build(&self, n: usize, seed: u64) -> Result<Vec<FeatureMap>> {
        (0..n)
            .map(|site| match self {
                FeatureSpec::Trig => Ok(FeatureMap::trig()),
                FeatureSpec::Born => Ok(FeatureMap::born()),
                FeatureSpec::Fourier { width, tau } => {
                    FeatureMap::random_fourier(*width, *tau, splitmix64(seed ^ (site as u64 + 1)))
                }
            })
            .collect()
    }
}

/// Dataset generator from a config value.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Equispaced { m: usize, lo: f64, hi: f64 },
    Random { m: usize, lo: f64, hi: f64 },
    Inline(Vec<Vec<f64>>),
    File(PathBuf),
    RandomBinary { m: usize },
    Strings(Vec<Vec<u8>>),
}

impl DatasetSpec {
    pub fn is_binary(&self) -> bool {
        matches!(self, DatasetSpec::RandomBinary { .. } | DatasetSpec::Strings(_))
    }

    pub fn build_points(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        match self {
            DatasetSpec::Equispaced { m, lo, hi } => mpsntk_core::dataset::equispaced(*m, n, *lo, *hi),
            DatasetSpec::Random { m, lo, hi } => {
                mpsntk_core::dataset::random_points(*m, n, *lo, *hi, splitmix64(seed ^ 0xda7a))
            }
            DatasetSpec::Inline(points) => {
                for p in points {
                    if p.len() != n {
                        return Err(Error::Config(format!(
                            "dataset: inline point of length {} but n = {n}",
                            p.len()
                        )));
                    }
                }
                Ok(points.clone())
            }
            DatasetSpec::File(path) => read_points_file(path, n),
            _ => Err(Error::Config("dataset: binary dataset used where real-valued points are required".into())),
        }
    }

    pub fn build_strings(&self, n: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
        match self {
            DatasetSpec::RandomBinary { m } => {
                mpsntk_core::dataset::random_binary_strings(*m, n, splitmix64(seed ^ 0xb17))
            }
            DatasetSpec::Strings(strings) => {
                for s in strings {
                    if s.len() != n {
                        return Err(Error::Config(format!(
                            "dataset: string of length {} but n = {n}",
                            s.len()
                        )));
                    }
                }
                Ok(strings.clone())
            }
            _ => Err(Error::Config("dataset: real-valued dataset used where binary strings are required".into())),
        }
    }
}

fn read_points_file(path: &Path, n: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("dataset: cannot read {}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|e| {
                    Error::Config(format!(
                        "dataset: bad value {:?} at {}:{}: {e}",
                        v,
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if p.len() != n {
            return Err(Error::Config(format!(
                "dataset: point of length {} at {}:{} but n = {n}",
                p.len(),
                path.display(),
                lineno + 1
            )));
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::Config(format!("dataset: {} holds no points", path.display())));
    }
    Ok(points)
}

/// Label choice for regression experiments.
#[derive(Clone, Debug, PartialEq)]
pub enum LabelSpec {
    Values(Vec<f64>),
    /// `y_j = sin(2 pi mean(x_j))`.
    Sin,
}

impl LabelSpec {
    pub fn build(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            LabelSpec::Values(v) => {
                if v.len() != points.len() {
                    return Err(Error::Config(format!(
                        "labels: {} values for {} points",
                        v.len(),
                        points.len()
                    )));
                }
                Ok(v.clone())
            }
            LabelSpec::Sin => Ok(points
                .iter()
                .map(|p| {
                    let mean = p.iter().sum::<f64>() / p.len() as f64;
                    (2.0 * std::f64::consts::PI * mean).sin()
                })
                .collect()),
        }
    }
}

/// A parsed, schema-checked experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub seed_from_env: bool,
    pub output_dir: PathBuf,
    pub n: usize,
    pub bond_dims: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub periodic: bool,
    pub trials: usize,
    pub feature: Option<FeatureSpec>,
    pub dataset: Option<DatasetSpec>,
    pub labels: Option<LabelSpec>,
    pub integrator: Option<Integrator>,
    pub t_end: f64,
    pub stride: usize,
    pub snapshot_ntk: bool,
    pub compare_closed_form: bool,
    /// pd-check: number of random datasets / points per dataset / bandwidth.
    pub count: usize,
    pub points_per_set: usize,
    pub tau: f64,
    /// ensemble-check: number of random inputs compared.
    pub checks: usize,
    /// Raw bytes of the config file (hashed into the run directory name).
    pub raw: String,
    /// Echo of the parsed key/value pairs for the manifest.
    pub echo: BTreeMap<String, String>,
}

/// One unresolved problem found by `validate`.
#[derive(Clone, Debug)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

struct RawConfig {
    pairs: BTreeMap<String, String>,
    raw: String,
}

fn parse_raw(text: &str) -> std::result::Result<RawConfig, Vec<Diagnostic>> {
    let mut pairs = BTreeMap::new();
    let mut diags = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim().to_string();
                let value = value.trim().to_string();
                if pairs.insert(key.clone(), value).is_some() {
                    diags.push(Diagnostic {
                        field: key,
                        message: format!("duplicated at line {}", lineno + 1),
                    });
                }
            }
            None => diags.push(Diagnostic {
                field: format!("line {}", lineno + 1),
                message: format!("expected `key = value`, got {line:?}"),
            }),
        }
    }
    if diags.is_empty() {
        Ok(RawConfig { pairs, raw: text.to_string() })
    } else {
        Err(diags)
    }
}

/// `name(arg=value, ...)` helper for structured values.
fn parse_call(value: &str) -> Option<(&str, Vec<(&str, &str)>)> {
    let open = value.find('(')?;
    if !value.ends_with(')') {
        return None;
    }
    let name = value[..open].trim();
    let inner = &value[open + 1..value.len() - 1];
    let mut args = Vec::new();
    if !inner.trim().is_empty() {
        for part in inner.split(',') {
            match part.split_once('=') {
                Some((k, v)) => args.push((k.trim(), v.trim())),
                None => args.push(("", part.trim())),
            }
        }
    }
    Some((name, args))
}

struct Schema {
    required: &'static [&'static str],
    optional: &'static [&'static str],
}

fn schema(kind: ExperimentKind) -> Schema {
    const COMMON_OPT: &[&str] = &["output_dir", "periodic", "sigma", "sigmas"];
    match kind {
        ExperimentKind::NtkConverge => Schema {
            required: &["experiment", "seed", "n", "bond_dims", "trials", "feature_map", "dataset"],
            optional: COMMON_OPT,
        },
        ExperimentKind::GpTest => Schema {
            required: &["experiment", "seed", "n", "bond_dims", "trials", "feature_map", "dataset"],
            optional: COMMON_OPT,
        },
        ExperimentKind::PdCheck => Schema {
            required: &["experiment", "seed", "n", "count", "points", "tau"],
            optional: &["output_dir", "sigma", "sigmas"],
        },
        ExperimentKind::RmseFlow => Schema {
            required: &["experiment", "seed", "n", "bond_dim", "feature_map", "dataset", "labels", "integrator", "t_end"],
            optional: &["output_dir", "periodic", "sigma", "sigmas", "stride", "snapshot_ntk", "compare_closed_form"],
        },
        ExperimentKind::LazyTrain => Schema {
            required: &["experiment", "seed", "n", "bond_dims", "trials", "feature_map", "dataset", "labels", "integrator", "t_end"],
            optional: COMMON_OPT,
        },
        ExperimentKind::BornFlow => Schema {
            required: &["experiment", "seed", "n", "bond_dim", "dataset", "integrator", "t_end"],
            optional: &["output_dir", "sigma", "sigmas", "stride"],
        },
        ExperimentKind::ZDist => Schema {
            required: &["experiment", "seed", "n", "bond_dim", "trials"],
            optional: &["output_dir", "sigma", "sigmas"],
        },
        ExperimentKind::EnsembleCheck => Schema {
            required: &["experiment", "seed", "n", "bond_dim", "feature_map", "checks"],
            optional: COMMON_OPT,
        },
    }
}

struct Checker<'a> {
    pairs: &'a BTreeMap<String, String>,
    diags: Vec<Diagnostic>,
}

impl<'a> Checker<'a> {
    fn diag(&mut self, field: &str, message: impl Into<String>) {
        self.diags.push(Diagnostic { field: field.to_string(), message: message.into() });
    }

    fn parse<T: std::str::FromStr>(&mut self, field: &str, what: &str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        let value = self.pairs.get(field)?;
        match value.parse::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.diag(field, format!("expected {what}, got {value:?} ({e})"));
                None
            }
        }
    }

    fn parse_list<T: std::str::FromStr>(&mut self, field: &str, what: &str) -> Option<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let value = self.pairs.get(field)?;
        let mut out = Vec::new();
        for part in value.split(',') {
            match part.trim().parse::<T>() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.diag(field, format!("expected a comma list of {what}, got {part:?} ({e})"));
                    return None;
                }
            }
        }
        Some(out)
    }
}

/// Parse and fully check a config against the schema of its experiment
/// kind. Returns the typed config or the list of diagnostics.
pub fn load_config(
    text: &str,
    expected_kind: Option<ExperimentKind>,
    env_seed: Option<&str>,
) -> std::result::Result<ExperimentConfig, Vec<Diagnostic>> {
    let raw = parse_raw(text)?;
    let mut c = Checker { pairs: &raw.pairs, diags: Vec::new() };

    let kind = match raw.pairs.get("experiment") {
        None => {
            c.diag("experiment", "missing; one of ntk-converge, pd-check, rmse-flow, lazy-train, born-flow, z-dist, gp-test, ensemble-check");
            return Err(c.diags);
        }
        Some(name) => match ExperimentKind::parse(name) {
            Some(k) => k,
            None => {
                c.diag("experiment", format!("unknown experiment {name:?}"));
                return Err(c.diags);
            }
        },
    };
    if let Some(expected) = expected_kind {
        if expected != kind {
            c.diag(
                "experiment",
                format!(
                    "config declares experiment = {} but the subcommand is {}",
                    kind.name(),
                    expected.name()
                ),
            );
            return Err(c.diags);
        }
    }

    let sch = schema(kind);
    for key in raw.pairs.keys() {
        if !sch.required.contains(&key.as_str()) && !sch.optional.contains(&key.as_str()) {
            c.diag(key, format!("unknown key for experiment {}", kind.name()));
        }
    }
    for key in sch.required {
        if !raw.pairs.contains_key(*key) {
            c.diag(key, "missing required key");
        }
    }

    // Seed, with the documented environment override.
    let mut seed_from_env = false;
    let mut seed: u64 = c.parse("seed", "an unsigned integer").unwrap_or(0);
    if let Some(env) = env_seed {
        match env.parse::<u64>() {
            Ok(s) => {
                seed = s;
                seed_from_env = true;
            }
            Err(e) => c.diag("MPSNTK_SEED", format!("expected an unsigned integer, got {env:?} ({e})")),
        }
    }

    let n: usize = c.parse("n", "a positive integer").unwrap_or(1);
    if raw.pairs.contains_key("n") && n == 0 {
        c.diag("n", "chain length must be >= 1");
    }

    let mut bond_dims: Vec<usize> = Vec::new();
    if raw.pairs.contains_key("bond_dim") {
        if let Some(d) = c.parse::<usize>("bond_dim", "a positive integer") {
            if d == 0 {
                c.diag("bond_dim", "bond dimension must be >= 1");
            }
            bond_dims = vec![d];
        }
    }
    if raw.pairs.contains_key("bond_dims") {
        if let Some(ds) = c.parse_list::<usize>("bond_dims", "positive integers") {
            if ds.is_empty() || ds.contains(&0) {
                c.diag("bond_dims", "bond dimensions must be >= 1");
            }
            bond_dims = ds;
        }
    }

    // Sigmas: uniform `sigma` or per-site `sigmas`, not both.
    let mut sigmas = vec![1.0; n.max(1)];
    match (raw.pairs.contains_key("sigma"), raw.pairs.contains_key("sigmas")) {
        (true, true) => c.diag("sigma", "give either sigma or sigmas, not both"),
        (true, false) => {
            if let Some(s) = c.parse::<f64>("sigma", "a positive real") {
                if !(s > 0.0) {
                    c.diag("sigma", format!("must be positive, got {s}"));
                }
                sigmas = vec![s; n.max(1)];
            }
        }
        (false, true) => {
            if let Some(list) = c.parse_list::<f64>("sigmas", "positive reals") {
                if list.len() != n {
                    c.diag("sigmas", format!("{} values for n = {n}", list.len()));
                }
                if list.iter().any(|s| !(*s > 0.0)) {
                    c.diag("sigmas", "all entries must be positive");
                }
                sigmas = list;
            }
        }
        (false, false) => {}
    }

    let periodic = match raw.pairs.get("periodic").map(|s| s.as_str()) {
        None => true,
        Some("true") => true,
        Some("false") => false,
        Some(other) => {
            c.diag("periodic", format!("expected true or false, got {other:?}"));
            true
        }
    };

    let trials: usize = c.parse("trials", "a positive integer").unwrap_or(0);
    match kind {
        ExperimentKind::GpTest if raw.pairs.contains_key("trials") && trials < 500 => {
            c.diag("trials", format!("limit-law check needs at least 500 trials, got {trials}"));
        }
        ExperimentKind::ZDist if raw.pairs.contains_key("trials") && trials < 200 => {
            c.diag("trials", format!("z study needs at least 200 trials, got {trials}"));
        }
        ExperimentKind::LazyTrain if raw.pairs.contains_key("trials") && trials < 5 => {
            c.diag("trials", format!("lazy-training study needs at least 5 trials, got {trials}"));
        }
        ExperimentKind::NtkConverge if raw.pairs.contains_key("trials") && trials == 0 => {
            c.diag("trials", "needs at least 1 trial");
        }
        _ => {}
    }

    let feature = raw.pairs.get("feature_map").and_then(|value| match parse_call(value) {
        Some(("fourier", args)) => {
            let mut width = None;
            let mut tau = None;
            for (k, v) in args {
                match k {
                    "width" => width = v.parse::<usize>().ok(),
                    "tau" => tau = v.parse::<f64>().ok(),
                    other => c.diag("feature_map", format!("unknown fourier argument {other:?}")),
                }
            }
            match (width, tau) {
                (Some(w), Some(t)) if w >= 2 && w % 2 == 0 && t > 0.0 => {
                    Some(FeatureSpec::Fourier { width: w, tau: t })
                }
                _ => {
                    c.diag("feature_map", "fourier needs width (even, >= 2) and tau (> 0)");
                    None
                }
            }
        }
        _ => match value.as_str() {
            "trig" => Some(FeatureSpec::Trig),
            "born" => Some(FeatureSpec::Born),
            other => {
                c.diag("feature_map", format!("unknown feature map {other:?}; expected trig, born or fourier(width=..., tau=...)"));
                None
            }
        },
    });

    let needs_binary = kind == ExperimentKind::BornFlow;
    let dataset = raw.pairs.get("dataset").and_then(|value| {
        let parsed = parse_dataset(value, &mut c);
        if let Some(spec) = &parsed {
            if needs_binary && !spec.is_binary() {
                c.diag("dataset", "born-flow needs random_binary(m=...) or strings(...)");
            }
            if !needs_binary && spec.is_binary() {
                c.diag("dataset", format!("{} needs real-valued points", kind.name()));
            }
            if let DatasetSpec::File(path) = spec {
                if !path.exists() {
                    c.diag("dataset", format!("file {} does not exist", path.display()));
                }
            }
        }
        parsed
    });

    let labels = raw.pairs.get("labels").and_then(|value| {
        if value.trim() == "sin" {
            Some(LabelSpec::Sin)
        } else {
            let parsed: std::result::Result<Vec<f64>, _> =
                value.split(',').map(|v| v.trim().parse::<f64>()).collect();
            match parsed {
                Ok(vs) if !vs.is_empty() => Some(LabelSpec::Values(vs)),
                _ => {
                    c.diag("labels", format!("expected `sin` or a comma list of reals, got {value:?}"));
                    None
                }
            }
        }
    });

    let integrator = raw.pairs.get("integrator").and_then(|value| match parse_call(value) {
        Some((name @ ("rk4" | "euler"), args)) => {
            let mut dt = None;
            for (k, v) in args {
                if k == "dt" || k.is_empty() {
                    dt = v.parse::<f64>().ok();
                } else {
                    c.diag("integrator", format!("unknown argument {k:?}"));
                }
            }
            match dt {
                Some(dt) if dt > 0.0 => Some(if name == "rk4" {
                    Integrator::Rk4 { dt }
                } else {
                    Integrator::Euler { dt }
                }),
                _ => {
                    c.diag("integrator", "needs dt > 0");
                    None
                }
            }
        }
        _ => {
            c.diag("integrator", format!("expected rk4(dt=...) or euler(dt=...), got {value:?}"));
            None
        }
    });

    let t_end: f64 = c.parse("t_end", "a nonnegative real").unwrap_or(0.0);
    if raw.pairs.contains_key("t_end") && !(t_end >= 0.0) {
        c.diag("t_end", format!("must be nonnegative, got {t_end}"));
    }
    let stride: usize = c.parse("stride", "a positive integer").unwrap_or(1);
    if raw.pairs.contains_key("stride") && stride == 0 {
        c.diag("stride", "must be >= 1");
    }
    let snapshot_ntk = parse_flag(&mut c, "snapshot_ntk");
    let compare_closed_form = parse_flag(&mut c, "compare_closed_form");

    let count: usize = c.parse("count", "a positive integer").unwrap_or(0);
    if kind == ExperimentKind::PdCheck && raw.pairs.contains_key("count") && count == 0 {
        c.diag("count", "needs at least one dataset");
    }
    let points_per_set: usize = c.parse("points", "a positive integer").unwrap_or(0);
    if kind == ExperimentKind::PdCheck && raw.pairs.contains_key("points") && !(1..=64).contains(&points_per_set) {
        c.diag("points", format!("needs between 1 and 64 points, got {points_per_set}"));
    }
    let tau: f64 = c.parse("tau", "a positive real").unwrap_or(1.0);
    if kind == ExperimentKind::PdCheck && raw.pairs.contains_key("tau") && !(tau > 0.0) {
        c.diag("tau", format!("must be positive, got {tau}"));
    }
    let checks: usize = c.parse("checks", "a positive integer").unwrap_or(0);
    if kind == ExperimentKind::EnsembleCheck && raw.pairs.contains_key("checks") && checks == 0 {
        c.diag("checks", "needs at least one comparison input");
    }

    // Module guards that depend on combined values.
    match kind {
        ExperimentKind::ZDist => {
            if n > mpsntk_core::born::OMEGA_GUARD {
                c.diag("n", format!(
                    "sample space enumeration is limited to n <= {}, got {n}",
                    mpsntk_core::born::OMEGA_GUARD
                ));
            }
        }
        ExperimentKind::BornFlow => {
            if n > mpsntk_core::born::OMEGA_GUARD {
                c.diag("n", format!(
                    "sample space enumeration is limited to n <= {}, got {n}",
                    mpsntk_core::born::OMEGA_GUARD
                ));
            } else if n > mpsntk_core::born::FLOW_GUARD {
                c.diag("n", format!(
                    "born flow materializes the kernel over 2^n strings; limited to n <= {}, got {n}",
                    mpsntk_core::born::FLOW_GUARD
                ));
            }
        }
        ExperimentKind::EnsembleCheck => {
            if raw.pairs.contains_key("n") && (1usize << n.min(40)) > mpsntk_core::ensemble::MEMBER_GUARD {
                c.diag("n", format!(
                    "ensemble of 2^{n} members exceeds the guard of {}",
                    mpsntk_core::ensemble::MEMBER_GUARD
                ));
            }
        }
        _ => {}
    }

    let output_dir = PathBuf::from(raw.pairs.get("output_dir").cloned().unwrap_or_else(|| "runs".to_string()));

    if !c.diags.is_empty() {
        return Err(c.diags);
    }
    Ok(ExperimentConfig {
        kind,
        seed,
        seed_from_env,
        output_dir,
        n,
        bond_dims,
        sigmas,
        periodic,
        trials,
        feature,
        dataset,
        labels,
        integrator,
        t_end,
        stride,
        snapshot_ntk,
        compare_closed_form,
        count,
        points_per_set,
        tau,
        checks,
        echo: raw.pairs.clone(),
        raw: raw.raw,
    })
}

fn parse_flag(c: &mut Checker<'_>, field: &str) -> bool {
    match c.pairs.get(field).map(|s| s.as_str()) {
        None => false,
        Some("true") => true,
        Some("false") => false,
        Some(other) => {
            c.diag(field, format!("expected true or false, got {other:?}"));
            false
        }
    }
}

fn parse_dataset(value: &str, c: &mut Checker<'_>) -> Option<DatasetSpec> {
    let Some((name, args)) = parse_call(value) else {
        c.diag("dataset", format!("expected a generator like equispaced(m=8, lo=0, hi=1), got {value:?}"));
        return None;
    };
    let get = |args: &[(&str, &str)], key: &str| -> Option<String> {
        args.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_string())
    };
    match name {
        "equispaced" | "random" => {
            let m = get(&args, "m").and_then(|v| v.parse::<usize>().ok());
            let lo = get(&args, "lo").and_then(|v| v.parse::<f64>().ok()).unwrap_or(0.0);
            let hi = get(&args, "hi").and_then(|v| v.parse::<f64>().ok()).unwrap_or(1.0);
            match m {
                Some(m) if m >= 1 && hi > lo => Some(if name == "equispaced" {
                    DatasetSpec::Equispaced { m, lo, hi }
                } else {
                    DatasetSpec::Random { m, lo, hi }
                }),
                _ => {
                    c.diag("dataset", format!("{name} needs m >= 1 and hi > lo"));
                    None
                }
            }
        }
        "random_binary" => match get(&args, "m").and_then(|v| v.parse::<usize>().ok()) {
            Some(m) if m >= 1 => Some(DatasetSpec::RandomBinary { m }),
            _ => {
                c.diag("dataset", "random_binary needs m >= 1");
                None
            }
        },
        "strings" => {
            let mut strings = Vec::new();
            for (_, v) in &args {
                let bits: Option<Vec<u8>> = v
                    .chars()
                    .map(|ch| match ch {
                        '0' => Some(0u8),
                        '1' => Some(1u8),
                        _ => None,
                    })
                    .collect();
                match bits {
                    Some(b) if !b.is_empty() => strings.push(b),
                    _ => {
                        c.diag("dataset", format!("strings entries must be 0/1 words, got {v:?}"));
                        return None;
                    }
                }
            }
            if strings.is_empty() {
                c.diag("dataset", "strings(...) needs at least one word");
                return None;
            }
            Some(DatasetSpec::Strings(strings))
        }
        "inline" => {
            let inner = &value[value.find('(').unwrap() + 1..value.len() - 1];
            let mut points = Vec::new();
            for part in inner.split(';') {
                let p: std::result::Result<Vec<f64>, _> =
                    part.split_whitespace().map(|v| v.parse::<f64>()).collect();
                match p {
                    Ok(p) if !p.is_empty() => points.push(p),
                    _ => {
                        c.diag("dataset", format!("inline point {part:?} is not a space-separated list of reals"));
                        return None;
                    }
                }
            }
            if points.is_empty() {
                c.diag("dataset", "inline(...) needs at least one point");
                return None;
            }
            Some(DatasetSpec::Inline(points))
        }
        "file" => {
            let path = args.first().map(|(_, v)| v.to_string()).unwrap_or_default();
            if path.is_empty() {
                c.diag("dataset", "file(...) needs a path");
                None
            } else {
                Some(DatasetSpec::File(PathBuf::from(path)))
            }
        }
        other => {
            c.diag("dataset", format!("unknown dataset generator {other:?}"));
            None
        }
    }
}
