//! Run configuration: TOML file, scenario defaults and `--key value` overrides.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

const COMMON_KEYS: &[&str] = &["output", "preset", "g_khz", "tc_seconds", "tolerance"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Gate,
    Ghz,
    ThermalSweep,
    ErrorBudget,
    ValidatePropagator,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Self::Gate, Self::Ghz, Self::ThermalSweep, Self::ErrorBudget, Self::ValidatePropagator];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gate => "gate",
            Self::Ghz => "ghz",
            Self::ThermalSweep => "thermal-sweep",
            Self::ErrorBudget => "error-budget",
            Self::ValidatePropagator => "validate-propagator",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Self::Gate => "two-atom phase gate: four |±±⟩ inputs plus the |gg⟩ probe",
            Self::Ghz => "N-atom GHZ generation from |g…g⟩",
            Self::ThermalSweep => "gate fidelity across thermal photon numbers",
            Self::ErrorBudget => "Stark-shift, asynchronous-entry, Rabi-fluctuation and decay errors",
            Self::ValidatePropagator => "closed-form propagator vs time-ordered integration at random (δ, t)",
        }
    }

    /// Scenario-specific keys; [`COMMON_KEYS`] apply everywhere.
    fn keys(self) -> &'static [&'static str] {
        const GATE: &[&str] = &["g", "omega_ratio", "k", "nbar", "cutoff", "model", "kappa", "nbar_bath"];
        const GHZ: &[&str] = &["n_atoms", "g", "omega_ratio", "family_index", "nbar", "cutoff", "model", "kappa", "nbar_bath"];
        const SWEEP: &[&str] = &["g", "omega_ratio", "k", "nbar_list", "model", "kappa", "nbar_bath"];
        const BUDGET: &[&str] = &["omega_ratio", "epsilon", "cutoff", "paper_params"];
        const VALIDATE: &[&str] = &["samples", "seed", "cutoff", "padding", "delta_min", "delta_max"];
        match self {
            Self::Gate => GATE,
            Self::Ghz => GHZ,
            Self::ThermalSweep => SWEEP,
            Self::ErrorBudget => BUDGET,
            Self::ValidatePropagator => VALIDATE,
        }
    }

    fn accepts(self, key: &str) -> bool {
        key == "scenario" || COMMON_KEYS.contains(&key) || self.keys().contains(&key)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| CliError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Effective,
    Full,
    Lindblad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `g = 2π × 50 kHz`, photon decay time `Tc = 1 ms`.
    Paper,
}

pub const PRESET_G_KHZ: f64 = 50.0;
pub const PRESET_TC_SECONDS: f64 = 1e-3;

/// Every key any scenario understands; absent keys take scenario defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Atom count (GHZ only; the gate always uses two atoms).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<usize>,
    /// Coupling in internal units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    /// Physical coupling `g/2π` in kHz; only used to report physical times.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_khz: Option<f64>,
    /// Target `Ω/g`, rounded to the nearest admissible drive.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_ratio: Option<f64>,
    /// Gate drive index, `Ω/g = k + ¼`; overrides `omega_ratio`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// GHZ drive index: `Ω/g = n` for even N, `n + ¼` for odd N; overrides `omega_ratio`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_index: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar_list: Option<Vec<f64>>,
    /// Fock cutoff; chosen from the photon number when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    /// Cavity decay rate in units of `g`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Photon decay time in seconds; needs `g_khz`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tc_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar_bath: Option<f64>,
    /// Integrator self-convergence tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper_params: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    /// Output path prefix; `.csv` and `.jsonl` are appended.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl RunConfig {
    /// Documented defaults of a scenario.
    pub fn defaults(scenario: Scenario) -> Self {
        let base = Self { scenario: Some(scenario), ..Self::default() };
        match scenario {
            Scenario::Gate => Self {
                g: Some(1.0),
                omega_ratio: Some(50.0),
                nbar: Some(0.0),
                model: Some(ModelKind::Full),
                tolerance: Some(1e-8),
                ..base
            },
            Scenario::Ghz => Self {
                n_atoms: Some(3),
                g: Some(1.0),
                omega_ratio: Some(50.0),
                nbar: Some(0.0),
                model: Some(ModelKind::Full),
                tolerance: Some(1e-8),
                ..base
            },
            Scenario::ThermalSweep => Self {
                g: Some(1.0),
                omega_ratio: Some(50.0),
                nbar_list: Some(vec![0.0, 0.5, 1.0, 2.0]),
                model: Some(ModelKind::Full),
                tolerance: Some(1e-8),
                ..base
            },
            Scenario::ErrorBudget => Self {
                omega_ratio: Some(5.0),
                epsilon: Some(0.01),
                cutoff: Some(12),
                tolerance: Some(1e-8),
                paper_params: Some(false),
                ..base
            },
            Scenario::ValidatePropagator => Self {
                samples: Some(10),
                seed: Some(2024),
                cutoff: Some(12),
                padding: Some(30),
                tolerance: Some(1e-9),
                delta_min: Some(0.5),
                delta_max: Some(2.0),
                ..base
            },
        }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario.expect("scenario is set by load")
    }

    /// Coupling `g` in rad/s when physical units are configured.
    pub fn g_physical(&self) -> Option<f64> {
        self.g_khz.map(|khz| 2.0 * std::f64::consts::PI * khz * 1e3)
    }

    /// Cavity decay rate in units of `g`, from `kappa` or `tc_seconds`.
    pub fn kappa_internal(&self) -> Result<Option<f64>, CliError> {
        match (self.kappa, self.tc_seconds) {
            (Some(k), _) => Ok(Some(k)),
            (None, Some(tc)) => {
                let g = self.g_physical().ok_or_else(|| CliError::Config("tc_seconds needs g_khz".into()))?;
                Ok(Some(1.0 / (tc * g) * self.g.unwrap_or(1.0)))
            }
            (None, None) => Ok(None),
        }
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let positive = [("g", self.g), ("g_khz", self.g_khz), ("tc_seconds", self.tc_seconds), ("tolerance", self.tolerance)];
        for (name, v) in positive {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return bad(format!("{name} must be positive, got {x}"));
                }
            }
        }
        let non_negative = [("nbar", self.nbar), ("kappa", self.kappa), ("nbar_bath", self.nbar_bath), ("epsilon", self.epsilon)];
        for (name, v) in non_negative {
            if let Some(x) = v {
                if !(x >= 0.0 && x.is_finite()) {
                    return bad(format!("{name} must be >= 0, got {x}"));
                }
            }
        }
        if let Some(list) = &self.nbar_list {
            if list.is_empty() || list.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return bad("nbar_list must be a non-empty list of values >= 0".into());
            }
        }
        if let Some(c) = self.cutoff {
            if c < 2 {
                return bad(format!("cutoff must be at least 2, got {c}"));
            }
        }
        if let (Some(lo), Some(hi)) = (self.delta_min, self.delta_max) {
            if !(lo > 0.0 && hi >= lo) {
                return bad(format!("need 0 < delta_min <= delta_max, got {lo}, {hi}"));
            }
        }
        if self.samples == Some(0) {
            return bad("samples must be at least 1".into());
        }
        if self.model == Some(ModelKind::Lindblad) && self.kappa.is_none() && self.tc_seconds.is_none() {
            return bad("model = \"lindblad\" needs kappa or tc_seconds (or preset = \"paper\")".into());
        }
        Ok(())
    }
}

/// Commented TOML template holding the defaults of `scenario`.
pub fn template(scenario: Scenario) -> String {
    let header = match scenario {
        Scenario::Gate => "# Omega/g is rounded to k + 1/4 (Omega t = (2k + 1/2) pi). Set k to pick it directly.\n# cutoff: chosen from nbar when absent.\n",
        Scenario::Ghz => "# Drive family by parity of n_atoms: even N uses Omega/g = n (Omega t = 2 n pi),\n# odd N uses Omega/g = n + 1/4 (Omega t = (2n + 1/2) pi). family_index sets n directly.\n# cutoff: chosen from nbar when absent.\n",
        Scenario::ThermalSweep => "# Cutoff per point: at least max(10, ceil(8 nbar)), raised until the thermal tail is negligible.\n",
        Scenario::ErrorBudget => "# paper_params = true selects Omega/g = 5, epsilon = 0.01 and the reference preset (g/2pi = 50 kHz, Tc = 1 ms).\n",
        Scenario::ValidatePropagator => "# Random (delta, t): delta/g in [delta_min, delta_max], t in (0, 4 pi / delta].\n",
    };
    let body = toml::to_string(&RunConfig::defaults(scenario)).expect("defaults serialize");
    format!("# cavity-gate {scenario}: {}\n{header}{body}", scenario.describe())
}

/// Parses `--key value` pairs (and bare `--flag` as `true`) into a table.
/// Values are read as TOML literals, falling back to plain strings.
pub fn parse_overrides(args: &[String]) -> Result<Table, CliError> {
    let mut table = Table::new();
    let mut i = 0;
    while i < args.len() {
        let raw = &args[i];
        let key = raw
            .strip_prefix("--")
            .ok_or_else(|| CliError::Config(format!("expected --key, found '{raw}'")))?;
        let (key, inline) = match key.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (key, None),
        };
        let key = key.replace('-', "_");
        let value = match inline {
            Some(v) => Some(v),
            None if i + 1 < args.len() && !args[i + 1].starts_with("--") => {
                i += 1;
                Some(args[i].clone())
            }
            None => None,
        };
        let parsed = match value {
            None => Value::Boolean(true),
            Some(v) => parse_literal(&v),
        };
        table.insert(key, parsed);
        i += 1;
    }
    Ok(table)
}

fn parse_literal(v: &str) -> Value {
    format!("x = {v}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| Value::String(v.to_string()))
}

/// Scenario defaults, overlaid by the config file, overlaid by overrides.
pub fn load(scenario: Scenario, file: Option<&str>, overrides: &Table) -> Result<RunConfig, CliError> {
    let mut merged = Table::try_from(RunConfig::defaults(scenario)).expect("defaults form a table");
    let mut layers = Vec::new();
    if let Some(text) = file {
        let table: Table = text.parse().map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
        if let Some(Value::String(s)) = table.get("scenario") {
            if s != scenario.name() {
                return Err(CliError::Config(format!("config is for scenario '{s}', not '{scenario}'")));
            }
        }
        layers.push(table);
    }
    layers.push(overrides.clone());
    for layer in layers {
        for (k, v) in layer {
            if !scenario.accepts(&k) && RunConfig::known_key(&k) {
                return Err(CliError::Config(format!("key '{k}' does not apply to scenario '{scenario}'")));
            }
            merged.insert(k, v);
        }
    }
    let mut cfg: RunConfig =
        Value::Table(merged).try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    if cfg.paper_params == Some(true) {
        cfg.preset = Some(Preset::Paper);
        if !overrides.contains_key("omega_ratio") {
            cfg.omega_ratio = Some(5.0);
        }
        if !overrides.contains_key("epsilon") {
            cfg.epsilon = Some(0.01);
        }
    }
    if cfg.preset == Some(Preset::Paper) {
        cfg.g_khz.get_or_insert(PRESET_G_KHZ);
        cfg.tc_seconds.get_or_insert(PRESET_TC_SECONDS);
    }
    cfg.check()?;
    Ok(cfg)
}

impl RunConfig {
    fn known_key(key: &str) -> bool {
        Scenario::ALL.iter().any(|s| s.accepts(key))
    }
}
