//! Experiment configuration: a sectioned key/value document.
//!
//! ```text
//! [scheme]                 # time grid, particle count, seed
//! [model.<name>]           # builtin or drift/diffusion expressions
//! [roles]                  # which models play lower/mid/upper, first/second
//! [functional.<name>]      # path functionals to estimate
//! [order_check]            # strike policy and z tolerance
//! [convergence]            # refinement ladder settings
//! [outputs]                # output directory and formats
//! ```
//!
//! Parsing is total: every unknown section or key, malformed value or
//! missing requirement is rejected with its line number.

use mcvorder_core::coefficients::{builtin_model, CoefficientSet, Relation};
use mcvorder_core::expr::Expr;
use mcvorder_core::measures::EmpiricalMeasure;
use mcvorder_core::paths::{FunctionalKind, FunctionalSpec};
use mcvorder_core::rng::keyed_normal;
use mcvorder_core::scheme::{SchemeConfig, TruncationMode};

use crate::error::CliError;

#[derive(Debug, Clone)]
struct RawEntry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone)]
struct RawSection {
    name: String,
    line: usize,
    entries: Vec<RawEntry>,
}

fn parse_raw(src: &str) -> Result<Vec<RawSection>, CliError> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in src.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| CliError::config_at(line_no, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(CliError::config_at(line_no, "empty section name"));
            }
            sections.push(RawSection {
                name: name.to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::config_at(line_no, format!("expected `key = value`, got `{line}`"))
        })?;
        let section = sections.last_mut().ok_or_else(|| {
            CliError::config_at(line_no, "key/value pair before any [section] header")
        })?;
        section.entries.push(RawEntry {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line: line_no,
        });
    }
    Ok(sections)
}

/// Typed access to one section; every key must be consumed.
struct SectionReader {
    name: String,
    line: usize,
    entries: Vec<RawEntry>,
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Option<RawEntry> {
        let pos = self.entries.iter().position(|e| e.key == key)?;
        Some(self.entries.remove(pos))
    }

    fn require(&mut self, key: &str) -> Result<RawEntry, CliError> {
        self.take(key).ok_or_else(|| {
            CliError::config_at(
                self.line,
                format!("section [{}] is missing required key `{key}`", self.name),
            )
        })
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(extra) = self.entries.first() {
            return Err(CliError::config_at(
                extra.line,
                format!("unknown key `{}` in section [{}]", extra.key, self.name),
            ));
        }
        Ok(())
    }
}

fn parse_f64(e: &RawEntry) -> Result<f64, CliError> {
    e.value
        .parse()
        .map_err(|_| CliError::config_at(e.line, format!("`{}` must be a number, got `{}`", e.key, e.value)))
}

fn parse_usize(e: &RawEntry) -> Result<usize, CliError> {
    e.value
        .parse()
        .map_err(|_| CliError::config_at(e.line, format!("`{}` must be a non-negative integer, got `{}`", e.key, e.value)))
}

fn parse_u64(e: &RawEntry) -> Result<u64, CliError> {
    e.value
        .parse()
        .map_err(|_| CliError::config_at(e.line, format!("`{}` must be an unsigned integer, got `{}`", e.key, e.value)))
}

fn parse_bool(e: &RawEntry) -> Result<bool, CliError> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(CliError::config_at(
            e.line,
            format!("`{}` must be true or false, got `{other}`", e.key),
        )),
    }
}

fn parse_f64_list(e: &RawEntry) -> Result<Vec<f64>, CliError> {
    e.value
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                CliError::config_at(e.line, format!("`{}`: bad number `{}`", e.key, s.trim()))
            })
        })
        .collect()
}

/// How particles start: a point mass, a Gaussian sample or explicit values.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Dirac(f64),
    Normal { mean: f64, std: f64 },
    Samples(Vec<f64>),
}

fn fnv1a(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in name.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

impl InitialSpec {
    fn parse(e: &RawEntry) -> Result<Self, CliError> {
        let v = e.value.trim();
        let bad = || {
            CliError::config_at(
                e.line,
                format!(
                    "`initial` must be dirac(<x0>), normal(<mean>, <std>) or samples(<v1>, ...), got `{v}`"
                ),
            )
        };
        let inner = |prefix: &str| -> Option<&str> {
            v.strip_prefix(prefix)?.strip_suffix(')')
        };
        if let Some(arg) = inner("dirac(") {
            return Ok(InitialSpec::Dirac(arg.trim().parse().map_err(|_| bad())?));
        }
        if let Some(args) = inner("normal(") {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() != 2 {
                return Err(bad());
            }
            let mean = parts[0].trim().parse().map_err(|_| bad())?;
            let std: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            if std < 0.0 {
                return Err(bad());
            }
            return Ok(InitialSpec::Normal { mean, std });
        }
        if let Some(args) = inner("samples(") {
            let vals: Result<Vec<f64>, _> = args.split(',').map(|s| s.trim().parse()).collect();
            return Ok(InitialSpec::Samples(vals.map_err(|_| bad())?));
        }
        Err(bad())
    }

    /// Materializes N initial states. Gaussian initials draw a
    /// deterministic stream keyed by the model name.
    pub fn realize(&self, n: usize, seed: u64, model_name: &str) -> Result<EmpiricalMeasure, CliError> {
        let samples = match self {
            InitialSpec::Dirac(x0) => vec![*x0; n],
            InitialSpec::Normal { mean, std } => {
                let stream = fnv1a(model_name);
                (0..n as u64)
                    .map(|i| mean + std * keyed_normal(seed ^ 0xd1ce_d1ce, stream, i))
                    .collect()
            }
            InitialSpec::Samples(values) => {
                if values.len() != n {
                    return Err(CliError::config(format!(
                        "model `{model_name}`: initial samples({}) must match particles_n = {n}",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        Ok(EmpiricalMeasure::new(samples)?)
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub coeffs: CoefficientSet,
    pub initial: InitialSpec,
}

#[derive(Debug, Clone)]
pub struct Roles {
    pub lower: Option<String>,
    pub mid: Option<String>,
    pub upper: Option<String>,
    pub first: Option<String>,
    pub second: Option<String>,
    pub relation: Relation2,
    pub relation_lower: Relation2,
    pub relation_upper: Relation2,
}

impl Default for Roles {
    fn default() -> Self {
        Self {
            lower: None,
            mid: None,
            upper: None,
            first: None,
            second: None,
            relation: Relation2(Relation::AssumptionII),
            // Bounding sandwiches constrain the plain outer models: the
            // direct route below, the symmetric route above.
            relation_lower: Relation2(Relation::AssumptionII),
            relation_upper: Relation2(Relation::AssumptionIIPrime),
        }
    }
}

/// Relation with its default direction per role slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relation2(pub Relation);

impl Default for Relation2 {
    fn default() -> Self {
        Relation2(Relation::AssumptionII)
    }
}

#[derive(Debug, Clone)]
pub enum StrikePolicy {
    /// 129 strikes bracketing the pooled samples by one standard deviation.
    Auto,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct OrderCheckSettings {
    pub strike_policy: StrikePolicy,
    pub z_tolerance: f64,
}

impl Default for OrderCheckSettings {
    fn default() -> Self {
        Self {
            strike_policy: StrikePolicy::Auto,
            z_tolerance: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceSettings {
    pub model: Option<String>,
    pub ladder: Vec<usize>,
    pub r_exponent: f64,
    pub coincidence_trials: usize,
    pub coincidence_lip: f64,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            model: None,
            ladder: vec![25, 50, 100, 200],
            r_exponent: 2.0,
            coincidence_trials: 100_000,
            coincidence_lip: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputSettings {
    pub dir: String,
    pub svg: bool,
    pub marginal_stride: usize,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: "out".to_string(),
            svg: true,
            marginal_stride: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeSettings {
    pub horizon_t: f64,
    pub steps_m: usize,
    pub particles_n: usize,
    pub p_exponent: f64,
    pub seed: u64,
    pub truncation: TruncationMode,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scheme: SchemeSettings,
    pub models: Vec<(String, ModelSpec)>,
    pub roles: Roles,
    pub functionals: Vec<(String, FunctionalSpec)>,
    pub order_check: OrderCheckSettings,
    pub convergence: ConvergenceSettings,
    pub outputs: OutputSettings,
    /// Original document, echoed into run manifests.
    pub source: String,
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> Result<Self, CliError> {
        let raw = parse_raw(src)?;

        let mut scheme: Option<SchemeSettings> = None;
        let mut models: Vec<(String, ModelSpec)> = Vec::new();
        let mut roles = Roles::default();
        let mut functionals: Vec<(String, FunctionalSpec)> = Vec::new();
        let mut order_check = OrderCheckSettings::default();
        let mut convergence = ConvergenceSettings::default();
        let mut outputs = OutputSettings::default();

        for section in raw {
            let mut r = SectionReader {
                name: section.name.clone(),
                line: section.line,
                entries: section.entries,
            };
            if section.name == "scheme" {
                let horizon_t = parse_f64(&r.require("horizon_t")?)?;
                let steps_m = parse_usize(&r.require("steps_m")?)?;
                let particles_n = parse_usize(&r.require("particles_n")?)?;
                let p_exponent = match r.take("p_exponent") {
                    Some(e) => parse_f64(&e)?,
                    None => 2.0,
                };
                let seed = parse_u64(&r.require("seed")?)?;
                let truncation = match r.take("truncation") {
                    None => TruncationMode::Truncated,
                    Some(e) => match e.value.as_str() {
                        "truncated" => TruncationMode::Truncated,
                        "regular" => TruncationMode::Regular,
                        other => {
                            return Err(CliError::config_at(
                                e.line,
                                format!("truncation must be `truncated` or `regular`, got `{other}`"),
                            ))
                        }
                    },
                };
                scheme = Some(SchemeSettings {
                    horizon_t,
                    steps_m,
                    particles_n,
                    p_exponent,
                    seed,
                    truncation,
                });
                r.finish()?;
            } else if let Some(model_name) = section.name.strip_prefix("model.") {
                let model_name = model_name.to_string();
                if models.iter().any(|(n, _)| n == &model_name) {
                    return Err(CliError::config_at(
                        section.line,
                        format!("duplicate model `{model_name}`"),
                    ));
                }
                let initial = InitialSpec::parse(&r.require("initial")?)?;
                let coeffs = if let Some(b) = r.take("builtin") {
                    let mut m = builtin_model(&b.value)
                        .map_err(|e| CliError::config_at(b.line, e.to_string()))?;
                    m.label = model_name.clone();
                    m
                } else {
                    let drift = r.require("drift")?;
                    let diffusion = r.require("diffusion")?;
                    let lip_x_drift = parse_f64(&r.require("lip_x_drift")?)?;
                    let lip_x_diffusion = parse_f64(&r.require("lip_x_diffusion")?)?;
                    let mut m = CoefficientSet::from_exprs(
                        model_name.clone(),
                        &drift.value,
                        &diffusion.value,
                        lip_x_drift,
                        lip_x_diffusion,
                    )
                    .map_err(|e| CliError::config_at(drift.line, e.to_string()))?;
                    if let Some(e) = r.take("lip_measure") {
                        m = m.with_lip_measure(parse_f64(&e)?);
                    }
                    if let Some(e) = r.take("holder_t") {
                        m = m.with_holder_t(parse_f64(&e)?);
                    }
                    if let Some(e) = r.take("probe_domain") {
                        let v = parse_f64_list(&e)?;
                        if v.len() != 2 || v[0] >= v[1] {
                            return Err(CliError::config_at(
                                e.line,
                                "probe_domain must be `<lo>, <hi>` with lo < hi",
                            ));
                        }
                        m = m.with_probe_domain(v[0], v[1]);
                    }
                    m
                };
                models.push((model_name, ModelSpec { coeffs, initial }));
                r.finish()?;
            } else if section.name == "roles" {
                for (slot, field) in [
                    ("lower", &mut roles.lower),
                    ("mid", &mut roles.mid),
                    ("upper", &mut roles.upper),
                    ("first", &mut roles.first),
                    ("second", &mut roles.second),
                ] {
                    if let Some(e) = r.take(slot) {
                        *field = Some(e.value);
                    }
                }
                for (key, field) in [
                    ("relation", &mut roles.relation),
                    ("relation_lower", &mut roles.relation_lower),
                    ("relation_upper", &mut roles.relation_upper),
                ] {
                    if let Some(e) = r.take(key) {
                        *field = Relation2(
                            e.value
                                .parse::<Relation>()
                                .map_err(|msg| CliError::config_at(e.line, msg))?,
                        );
                    }
                }
                r.finish()?;
            } else if let Some(fname) = section.name.strip_prefix("functional.") {
                let kind_entry = r.require("kind")?;
                let kind = match kind_entry.value.as_str() {
                    "terminal_call_square" => FunctionalKind::TerminalCallSquare,
                    "sup_path" => FunctionalKind::SupPath,
                    "terminal_value" => FunctionalKind::TerminalValue,
                    "composite" => {
                        let e = r.require("expr")?;
                        let expr = Expr::parse(&e.value)
                            .map_err(|err| CliError::config_at(e.line, err.to_string()))?;
                        FunctionalKind::UserComposite(expr)
                    }
                    other => {
                        return Err(CliError::config_at(
                            kind_entry.line,
                            format!(
                                "kind must be terminal_call_square | sup_path | terminal_value | composite, got `{other}`"
                            ),
                        ))
                    }
                };
                let mut spec = FunctionalSpec::new(kind);
                if let Some(e) = r.take("declared_monotone_convex") {
                    spec.monotone_convex_declared = parse_bool(&e)?;
                }
                functionals.push((fname.to_string(), spec));
                r.finish()?;
            } else if section.name == "order_check" {
                if let Some(e) = r.take("strike_policy") {
                    if e.value != "auto" {
                        return Err(CliError::config_at(
                            e.line,
                            "strike_policy must be `auto` (or provide explicit `strikes`)",
                        ));
                    }
                }
                if let Some(e) = r.take("strikes") {
                    let strikes = parse_f64_list(&e)?;
                    if strikes.is_empty() || strikes.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(CliError::config_at(
                            e.line,
                            "strikes must be a non-empty ascending list",
                        ));
                    }
                    order_check.strike_policy = StrikePolicy::Explicit(strikes);
                }
                if let Some(e) = r.take("z_tolerance") {
                    order_check.z_tolerance = parse_f64(&e)?;
                    if order_check.z_tolerance < 0.0 {
                        return Err(CliError::config_at(e.line, "z_tolerance must be >= 0"));
                    }
                }
                r.finish()?;
            } else if section.name == "convergence" {
                if let Some(e) = r.take("model") {
                    convergence.model = Some(e.value);
                }
                if let Some(e) = r.take("ladder") {
                    let ladder: Result<Vec<usize>, CliError> = e
                        .value
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<usize>().map_err(|_| {
                                CliError::config_at(e.line, format!("bad ladder entry `{}`", s.trim()))
                            })
                        })
                        .collect();
                    let ladder = ladder?;
                    if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
                        return Err(CliError::config_at(
                            e.line,
                            "ladder must be at least two step counts, each double the previous",
                        ));
                    }
                    convergence.ladder = ladder;
                }
                if let Some(e) = r.take("r_exponent") {
                    convergence.r_exponent = parse_f64(&e)?;
                }
                if let Some(e) = r.take("coincidence_trials") {
                    convergence.coincidence_trials = parse_usize(&e)?;
                }
                if let Some(e) = r.take("coincidence_lip") {
                    convergence.coincidence_lip = parse_f64(&e)?;
                }
                r.finish()?;
            } else if section.name == "outputs" {
                if let Some(e) = r.take("dir") {
                    outputs.dir = e.value;
                }
                if let Some(e) = r.take("formats") {
                    let mut svg = false;
                    for fmt in e.value.split(',') {
                        match fmt.trim() {
                            "csv" => {}
                            "svg" => svg = true,
                            other => {
                                return Err(CliError::config_at(
                                    e.line,
                                    format!("unknown output format `{other}` (csv, svg)"),
                                ))
                            }
                        }
                    }
                    outputs.svg = svg;
                }
                if let Some(e) = r.take("marginal_stride") {
                    outputs.marginal_stride = parse_usize(&e)?.max(1);
                }
                r.finish()?;
            } else {
                return Err(CliError::config_at(
                    section.line,
                    format!("unknown section [{}]", section.name),
                ));
            }
        }

        let scheme = scheme.ok_or_else(|| CliError::config("missing required section [scheme]"))?;
        Ok(ExperimentConfig {
            scheme,
            models,
            roles,
            functionals,
            order_check,
            convergence,
            outputs,
            source: src.to_string(),
        })
    }

    pub fn load(path: &str) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read config `{path}`: {e}"))
        })?;
        Self::parse(&src)
    }

    pub fn model(&self, name: &str) -> Result<&ModelSpec, CliError> {
        self.models
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| CliError::config(format!("model `{name}` is not defined")))
    }

    pub fn role(&self, slot: &str, value: &Option<String>) -> Result<String, CliError> {
        value.clone().ok_or_else(|| {
            CliError::config(format!("section [roles] must set `{slot}` for this command"))
        })
    }

    /// Scheme config with command-line overrides applied.
    pub fn scheme_config(&self, seed_override: Option<u64>, allow_large_h: bool) -> SchemeConfig {
        SchemeConfig {
            horizon_t: self.scheme.horizon_t,
            steps_m: self.scheme.steps_m,
            particles_n: self.scheme.particles_n,
            p_exponent: self.scheme.p_exponent,
            master_seed: seed_override.unwrap_or(self.scheme.seed),
            truncation: self.scheme.truncation,
            allow_large_h,
        }
    }

    /// Functionals to estimate; defaults to the squared call at the query
    /// time when the config lists none.
    pub fn functionals_or_default(&self) -> Vec<(String, FunctionalSpec)> {
        if self.functionals.is_empty() {
            vec![(
                "call_square".to_string(),
                FunctionalSpec::new(FunctionalKind::TerminalCallSquare),
            )]
        } else {
            self.functionals.clone()
        }
    }
}
