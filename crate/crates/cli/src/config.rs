//! Flat key=value run configuration.
//!
//! The same dialect is used for config files and for the `run_meta` file a
//! run writes, so a `run_meta` can be fed straight back in to replay a
//! run. Keys under the `meta.` namespace are informational and skipped on
//! load; every other unknown key is rejected. Defaults are documented in
//! the README and printable with `rexp run --print-config`.

use rexp_core::data::{fmt_f64, Dataset, Provenance};
use rexp_core::engine::{
    MemberSpec, Mode, ModelTemplate, MultiverseConfig, REConfig, SelectionCriterion,
    SelectionPolicy,
};
use rexp_core::imt::Weighting;
use rexp_core::metrics::GlitchConfig;
use rexp_core::nn::{Family, Optimizer, Scale, TrainConfig};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub mode: Mode,
    pub rounds: usize,
    pub master_seed: u64,
    pub stop_on_glitch: bool,
    pub holdout: bool,

    pub family: Family,
    pub scale: Scale,
    pub hidden: Vec<usize>,

    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,

    pub variance_threshold: f64,
    pub weighting: String, // "uniform" | "softmax-neg-aulc"
    pub temperature: f64,
    pub include_predictions: bool,
    pub max_components: Option<usize>,

    pub glitch_factor: f64,
    pub glitch_window: usize,

    pub members: Vec<(Family, Scale)>,
    pub selection: SelectionCriterion,
    pub budget: Option<usize>,

    pub dataset: Option<PathBuf>,
    pub data_n: usize,
    pub data_sigma: f64,
    pub data_seed: u64,
    pub data_lo: f64,
    pub data_hi: f64,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            mode: Mode::Re,
            rounds: 100,
            master_seed: 7,
            stop_on_glitch: false,
            holdout: false,
            family: Family::MlpTanh,
            scale: Scale::Medium,
            hidden: vec![32, 32],
            epochs: 110,
            learning_rate: 0.01,
            optimizer: Optimizer::Adam,
            variance_threshold: 0.20,
            weighting: "uniform".into(),
            temperature: 1.0,
            include_predictions: true,
            max_components: None,
            glitch_factor: 2.0,
            glitch_window: 3,
            members: Vec::new(),
            selection: SelectionCriterion::All,
            budget: None,
            dataset: None,
            data_n: 100,
            data_sigma: 0.1,
            data_seed: 7,
            data_lo: 0.0,
            data_hi: 1.0,
        }
    }
}

/// Splits a config file into (key, value, line) triples. Blank lines and
/// `#` comments are allowed.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String, usize)>, String> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value, got {raw:?}", idx + 1));
        };
        out.push((key.trim().to_string(), value.trim().to_string(), idx + 1));
    }
    Ok(out)
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| part.trim().parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_members(value: &str) -> Result<Vec<(Family, Scale)>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| {
            let part = part.trim();
            let Some((fam, scale)) = part.split_once(':') else {
                return Err(format!("member {part:?} must be family:scale"));
            };
            Ok((fam.parse::<Family>()?, scale.parse::<Scale>()?))
        })
        .collect()
}

impl CliConfig {
    /// Builds a config from entries, collecting every violation instead of
    /// stopping at the first.
    pub fn from_entries(entries: &[(String, String, usize)]) -> Result<CliConfig, Vec<String>> {
        let mut cfg = CliConfig::default();
        let mut violations: Vec<String> = Vec::new();

        macro_rules! set {
            ($key:expr, $value:expr, $slot:expr, $ty:ty) => {
                match $value.parse::<$ty>() {
                    Ok(v) => $slot = v,
                    Err(e) => violations.push(format!("{}: {e}", $key)),
                }
            };
        }

        for (key, value, _line) in entries {
            match key.as_str() {
                k if k.starts_with("meta.") => {} // informational echo
                "mode" => set!(key, value, cfg.mode, Mode),
                "rounds" => set!(key, value, cfg.rounds, usize),
                "master_seed" => set!(key, value, cfg.master_seed, u64),
                "stop_on_glitch" => set!(key, value, cfg.stop_on_glitch, bool),
                "holdout" => set!(key, value, cfg.holdout, bool),
                "family" => set!(key, value, cfg.family, Family),
                "scale" => set!(key, value, cfg.scale, Scale),
                "hidden" => match parse_list::<usize>(value) {
                    Ok(v) => cfg.hidden = v,
                    Err(e) => violations.push(format!("hidden: {e}")),
                },
                "epochs" => set!(key, value, cfg.epochs, usize),
                "learning_rate" => set!(key, value, cfg.learning_rate, f64),
                "optimizer" => set!(key, value, cfg.optimizer, Optimizer),
                "variance_threshold" => set!(key, value, cfg.variance_threshold, f64),
                "weighting" => {
                    if value == "uniform" || value == "softmax-neg-aulc" {
                        cfg.weighting = value.clone();
                    } else {
                        violations.push(format!(
                            "weighting: unknown value {value:?} (expected uniform or softmax-neg-aulc)"
                        ));
                    }
                }
                "temperature" => set!(key, value, cfg.temperature, f64),
                "include_predictions" => set!(key, value, cfg.include_predictions, bool),
                "max_components" => {
                    if value.is_empty() {
                        cfg.max_components = None;
                    } else {
                        match value.parse::<usize>() {
                            Ok(v) => cfg.max_components = Some(v),
                            Err(e) => violations.push(format!("max_components: {e}")),
                        }
                    }
                }
                "glitch_factor" => set!(key, value, cfg.glitch_factor, f64),
                "glitch_window" => set!(key, value, cfg.glitch_window, usize),
                "members" => match parse_members(value) {
                    Ok(v) => cfg.members = v,
                    Err(e) => violations.push(format!("members: {e}")),
                },
                "selection" => set!(key, value, cfg.selection, SelectionCriterion),
                "budget" => {
                    if value.is_empty() {
                        cfg.budget = None;
                    } else {
                        match value.parse::<usize>() {
                            Ok(v) => cfg.budget = Some(v),
                            Err(e) => violations.push(format!("budget: {e}")),
                        }
                    }
                }
                "dataset" => {
                    cfg.dataset = if value.is_empty() {
                        None
                    } else {
                        Some(PathBuf::from(value))
                    };
                }
                "data_n" => set!(key, value, cfg.data_n, usize),
                "data_sigma" => set!(key, value, cfg.data_sigma, f64),
                "data_seed" => set!(key, value, cfg.data_seed, u64),
                "data_lo" => set!(key, value, cfg.data_lo, f64),
                "data_hi" => set!(key, value, cfg.data_hi, f64),
                other => violations.push(format!("{other}: unknown key")),
            }
        }

        violations.extend(cfg.validate());
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(violations)
        }
    }

    /// Semantic checks; returns one message per violated key.
    fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.rounds < 1 {
            v.push("rounds: must be >= 1".into());
        }
        if self.epochs < 1 {
            v.push("epochs: must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            v.push("learning_rate: must be > 0".into());
        }
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            v.push("variance_threshold: must be in (0, 1]".into());
        }
        if !(self.temperature > 0.0) {
            v.push("temperature: must be > 0".into());
        }
        if self.max_components == Some(0) {
            v.push("max_components: must be >= 1 when set".into());
        }
        if !(self.glitch_factor > 1.0) {
            v.push("glitch_factor: must be > 1".into());
        }
        if self.glitch_window < 1 {
            v.push("glitch_window: must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            v.push("hidden: widths must be >= 1".into());
        }
        if self.dataset.is_none() {
            if self.data_n < 2 {
                v.push("data_n: must be >= 2".into());
            }
            if self.data_sigma < 0.0 {
                v.push("data_sigma: must be >= 0".into());
            }
            if !(self.data_lo < self.data_hi) {
                v.push("data_lo: must be < data_hi".into());
            }
        }

        let k = self.members.len();
        match self.mode {
            Mode::Re => {
                if k > 0 {
                    v.push("members: mode re runs a single lineage; leave members empty".into());
                }
            }
            Mode::Mvre => {
                if k == 0 {
                    v.push("members: mode mvre needs a member list".into());
                } else {
                    let first = self.members[0].0;
                    if self.members.iter().any(|(f, _)| *f != first) {
                        v.push(
                            "members: mode mvre requires all members to share one family".into(),
                        );
                    }
                }
            }
            Mode::Hmvre | Mode::ScHmvre => {
                let mut fams: Vec<String> =
                    self.members.iter().map(|(f, _)| f.to_string()).collect();
                fams.sort();
                fams.dedup();
                if fams.len() < 2 {
                    v.push(format!(
                        "members: mode {} requires at least 2 distinct families",
                        self.mode
                    ));
                }
            }
        }
        if self.mode != Mode::ScHmvre && self.selection != SelectionCriterion::All {
            v.push("selection: budgeted selection needs mode sc-hmvre".into());
        }
        if let Some(b) = self.budget {
            let k_eff = if self.mode == Mode::Re { 1 } else { k };
            if b < 1 || (k_eff > 0 && b > k_eff) {
                v.push(format!("budget: must be in [1, {k_eff}]"));
            }
            if self.mode != Mode::ScHmvre && k_eff > 0 && b != k_eff {
                v.push("budget: only sc-hmvre supports a partial budget".into());
            }
        }
        v
    }

    /// Full key=value echo of the effective configuration, alphabetical,
    /// suitable both for `--print-config` and for `run_meta`.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let hidden = self
            .hidden
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let members = self
            .members
            .iter()
            .map(|(f, s)| format!("{f}:{s}"))
            .collect::<Vec<_>>()
            .join(",");
        let mut entries = vec![
            (
                "budget".to_string(),
                self.budget.map_or(String::new(), |b| b.to_string()),
            ),
            ("data_hi".to_string(), fmt_f64(self.data_hi)),
            ("data_lo".to_string(), fmt_f64(self.data_lo)),
            ("data_n".to_string(), self.data_n.to_string()),
            ("data_seed".to_string(), self.data_seed.to_string()),
            ("data_sigma".to_string(), fmt_f64(self.data_sigma)),
            (
                "dataset".to_string(),
                self.dataset
                    .as_ref()
                    .map_or(String::new(), |p| p.display().to_string()),
            ),
            ("epochs".to_string(), self.epochs.to_string()),
            ("family".to_string(), self.family.to_string()),
            ("glitch_factor".to_string(), fmt_f64(self.glitch_factor)),
            ("glitch_window".to_string(), self.glitch_window.to_string()),
            ("hidden".to_string(), hidden),
            ("holdout".to_string(), self.holdout.to_string()),
            (
                "include_predictions".to_string(),
                self.include_predictions.to_string(),
            ),
            ("learning_rate".to_string(), fmt_f64(self.learning_rate)),
            ("master_seed".to_string(), self.master_seed.to_string()),
            (
                "max_components".to_string(),
                self.max_components.map_or(String::new(), |c| c.to_string()),
            ),
            ("members".to_string(), members),
            ("mode".to_string(), self.mode.to_string()),
            ("optimizer".to_string(), self.optimizer.to_string()),
            ("rounds".to_string(), self.rounds.to_string()),
            ("scale".to_string(), self.scale.to_string()),
            ("selection".to_string(), self.selection.to_string()),
            (
                "stop_on_glitch".to_string(),
                self.stop_on_glitch.to_string(),
            ),
            ("temperature".to_string(), fmt_f64(self.temperature)),
            (
                "variance_threshold".to_string(),
                fmt_f64(self.variance_threshold),
            ),
            ("weighting".to_string(), self.weighting.clone()),
        ];
        entries.sort();
        entries
    }

    pub fn print(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.to_entries() {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }

    /// Materializes the engine-side configuration.
    pub fn build(&self) -> (REConfig, MultiverseConfig, SelectionPolicy) {
        let mut cfg = REConfig::new(self.mode, self.rounds, self.master_seed);
        cfg.train = TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
        };
        cfg.aggregator.variance_threshold = self.variance_threshold;
        cfg.aggregator.weighting = if self.weighting == "softmax-neg-aulc" {
            Weighting::SoftmaxNegAulc {
                temperature: self.temperature,
            }
        } else {
            Weighting::Uniform
        };
        cfg.aggregator.include_predictions = self.include_predictions;
        cfg.aggregator.max_components = self.max_components;
        cfg.glitch = GlitchConfig {
            factor: self.glitch_factor,
            window: self.glitch_window,
        };
        cfg.stop_on_glitch = self.stop_on_glitch;
        cfg.holdout = self.holdout;
        cfg.model = ModelTemplate {
            family: self.family,
            scale: self.scale,
            hidden: self.hidden.clone(),
        };

        let mv = if self.mode == Mode::Re {
            MultiverseConfig::singleton(&cfg.model)
        } else {
            MultiverseConfig::new(
                self.members
                    .iter()
                    .map(|&(f, s)| MemberSpec::new(f, s))
                    .collect(),
            )
        };
        let policy = SelectionPolicy {
            criterion: self.selection,
            budget: self.budget.unwrap_or(mv.k()),
        };
        (cfg, mv, policy)
    }

    /// Loads the dataset named by the config, or generates the default
    /// sine benchmark.
    pub fn load_dataset(&self) -> rexp_core::Result<Dataset> {
        match &self.dataset {
            Some(path) => rexp_core::data::load_dataset(path),
            None => rexp_core::data::generate_sinusoid(
                self.data_n,
                self.data_sigma,
                self.data_seed,
                self.data_lo,
                self.data_hi,
            ),
        }
    }

    /// Entries describing where the data actually came from, echoed into
    /// run_meta.
    pub fn provenance_entries(&self, dataset: &Dataset) -> Vec<(String, String)> {
        match &dataset.provenance {
            Provenance::Generated { generator, .. } => {
                vec![("meta.data_generator".into(), (*generator).into())]
            }
            Provenance::File { path } => {
                vec![("meta.data_file".into(), path.display().to_string())]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_entries() {
        let cfg = CliConfig::default();
        let text = cfg.print();
        let entries = parse_entries(&text).unwrap();
        let back = CliConfig::from_entries(&entries).unwrap();
        assert_eq!(back.print(), text);
    }

    #[test]
    fn unknown_keys_are_rejected_and_all_violations_reported() {
        let text = "bogus=1\nrounds=0\nlearning_rate=-1\n";
        let entries = parse_entries(text).unwrap();
        let errs = CliConfig::from_entries(&entries).unwrap_err();
        assert!(errs.iter().any(|e| e.starts_with("bogus")));
        assert!(errs.iter().any(|e| e.starts_with("rounds")));
        assert!(errs.iter().any(|e| e.starts_with("learning_rate")));
    }

    #[test]
    fn mvre_heterogeneous_members_violate() {
        let text = "mode=mvre\nmembers=mlp-tanh:small,rbf:small\n";
        let entries = parse_entries(text).unwrap();
        let errs = CliConfig::from_entries(&entries).unwrap_err();
        assert!(
            errs.iter().any(|e| e.contains("share one family")),
            "{errs:?}"
        );
    }

    #[test]
    fn meta_keys_are_ignored_so_run_meta_replays() {
        let text = "mode=re\nmeta.artifact_version=0.1.0\nmeta.wall_ms_total=12\n";
        let entries = parse_entries(text).unwrap();
        let cfg = CliConfig::from_entries(&entries).unwrap();
        assert_eq!(cfg.mode, Mode::Re);
    }
}
