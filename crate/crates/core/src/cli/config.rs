//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::ensemble::{CvConfig, Selector, SelectorConfig};
use crate::error::{Error, Result};
use crate::realign::RealignConfig;
use crate::spatial::{Pairing, SpatialConfig};

/// Configuration key with its default and help text. An empty default
/// means "unset".
pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const KEYS: &[KeySpec] = &[
    KeySpec { name: "manifest", default: "", help: "covariate manifest CSV" },
    KeySpec { name: "response", default: "", help: "response value column (default: manifest)" },
    KeySpec { name: "output", default: "out", help: "output directory" },
    KeySpec { name: "seed", default: "", help: "master random seed" },
    KeySpec { name: "side", default: "25", help: "realignment block side (m)" },
    KeySpec { name: "grid_n", default: "100", help: "block lattice points per side" },
    KeySpec { name: "ridge", default: "0", help: "thin plate spline smoothing" },
    KeySpec { name: "neighbors", default: "200", help: "local spline sample count" },
    KeySpec { name: "max_order", default: "4", help: "highest covariate power" },
    KeySpec { name: "pairwise", default: "true", help: "include pairwise products" },
    KeySpec { name: "mccm", default: "0.95", help: "maximum |r| between kept columns" },
    KeySpec { name: "train_size", default: "35", help: "training rows per split" },
    KeySpec { name: "n_splits", default: "500", help: "number of splits" },
    KeySpec { name: "selector", default: "lasso_lar", help: "lasso_lar|exhaustive|forward|backward|seqrep" },
    KeySpec { name: "corr_tol", default: "0", help: "LAR residual correlation stop" },
    KeySpec { name: "max_steps", default: "", help: "LAR step cap" },
    KeySpec { name: "max_size", default: "", help: "largest subset for OLS selectors" },
    KeySpec { name: "allow_large", default: "false", help: "permit exhaustive search on wide designs" },
    KeySpec { name: "allow_collinear", default: "false", help: "permit OLS selectors above mccm 0.4" },
    KeySpec { name: "sse_floor", default: "1e-12", help: "validation SSE floor, or `none`" },
    KeySpec { name: "single_max", default: "12", help: "spatial single-axis power" },
    KeySpec { name: "inter_total_max", default: "6", help: "spatial interaction total order" },
    KeySpec { name: "central", default: "0.95", help: "uncertainty interval probability" },
    KeySpec { name: "pairing", default: "matched", help: "matched|cross ensemble pairing" },
    KeySpec { name: "template", default: "", help: "prediction grid (default: first raster)" },
    KeySpec { name: "dump_members", default: "false", help: "write per-member pixel predictions" },
    KeySpec { name: "sweep_train_sizes", default: "35,45,55", help: "sweep training sizes" },
    KeySpec { name: "sweep_mccm", default: "0.4,0.6,0.8,0.95", help: "sweep thresholds" },
];

/// Keys that do not affect results and are left out of the config hash.
const UNHASHED: &[&str] = &["output"];

/// Resolved key/value pairs, in key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn defaults() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|k| (k.name.to_string(), k.default.to_string()))
                .collect(),
        }
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse_text(&mut self, text: &str, origin: &str) -> std::result::Result<(), Vec<String>> {
        let mut errors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("{origin}:{}: expected `key = value`", i + 1));
                continue;
            };
            let k = k.trim();
            if let Err(e) = self.set(k, v.trim()) {
                errors.push(format!("{origin}:{}: {e}", i + 1));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.parse_text(&text, &path.display().to_string())
            .map_err(Error::Config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        if !KEYS.iter().any(|k| k.name == key) {
            return Err(format!("unknown key `{key}`"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// SHA-256 over the canonical `key=value` lines of every hashed key.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if !UNHASHED.contains(&k.as_str()) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub response: Option<String>,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub realign: RealignConfig,
    pub max_order: u32,
    pub pairwise: bool,
    pub mccm: f64,
    pub cv: CvConfig,
    pub allow_collinear: bool,
    pub spatial: SpatialConfig,
    pub central: f64,
    pub pairing: Pairing,
    pub template: Option<PathBuf>,
    pub dump_members: bool,
    pub sweep_train_sizes: Vec<usize>,
    pub sweep_mccm: Vec<f64>,
    pub hash: String,
}

/// Collects parse failures so every bad field is reported at once.
struct Checker<'a> {
    raw: &'a RawConfig,
    errors: Vec<String>,
}

impl Checker<'_> {
    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let v = self.raw.get(key);
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errors.push(format!("{key}: expected {what}, got `{v}`"));
                None
            }
        }
    }

    fn optional<T: FromStr>(&mut self, key: &str, what: &str) -> Option<Option<T>> {
        if self.raw.get(key).is_empty() {
            Some(None)
        } else {
            self.parse(key, what).map(Some)
        }
    }

    fn bool(&mut self, key: &str) -> Option<bool> {
        match self.raw.get(key) {
            "true" | "yes" | "on" | "1" => Some(true),
            "false" | "no" | "off" | "0" => Some(false),
            v => {
                self.errors.push(format!("{key}: expected true or false, got `{v}`"));
                None
            }
        }
    }

    fn check(&mut self, ok: bool, key: &str, msg: impl Into<String>) {
        if !ok {
            self.errors.push(format!("{key}: {}", msg.into()));
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, what: &str) -> Option<Vec<T>> {
        let v = self.raw.get(key);
        let parsed: std::result::Result<Vec<T>, _> =
            v.split(',').map(|s| s.trim().parse::<T>()).collect();
        match parsed {
            Ok(x) if !x.is_empty() => Some(x),
            _ => {
                self.errors.push(format!("{key}: expected comma-separated {what}, got `{v}`"));
                None
            }
        }
    }
}

fn mccm_ok(m: f64) -> bool {
    m > 0.0 && m <= 1.0
}

impl RunConfig {
    /// Validate every field, reporting all failures together.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut c = Checker { raw, errors: Vec::new() };

        let manifest = raw.get("manifest");
        c.check(!manifest.is_empty(), "manifest", "is required");
        let seed = c.optional::<u64>("seed", "a non-negative integer");
        let side = c.parse::<f64>("side", "a number");
        if let Some(s) = side {
            c.check(s > 0.0 && s.is_finite(), "side", format!("must be > 0, got {s}"));
        }
        let grid_n = c.parse::<usize>("grid_n", "a positive integer");
        if let Some(g) = grid_n {
            c.check(g >= 1, "grid_n", "must be >= 1");
        }
        let ridge = c.parse::<f64>("ridge", "a number");
        if let Some(r) = ridge {
            c.check(r >= 0.0 && r.is_finite(), "ridge", format!("must be >= 0, got {r}"));
        }
        let neighbors = c.parse::<usize>("neighbors", "an integer");
        if let Some(k) = neighbors {
            c.check(k >= 3, "neighbors", format!("must be >= 3, got {k}"));
        }
        let max_order = c.parse::<u32>("max_order", "a positive integer");
        if let Some(m) = max_order {
            c.check(m >= 1, "max_order", "must be >= 1");
        }
        let pairwise = c.bool("pairwise");
        let mccm = c.parse::<f64>("mccm", "a number");
        if let Some(m) = mccm {
            c.check(mccm_ok(m), "mccm", format!("must lie in (0, 1], got {m}"));
        }
        let train_size = c.parse::<usize>("train_size", "an integer");
        if let Some(t) = train_size {
            c.check(t >= 2, "train_size", format!("must be >= 2, got {t}"));
        }
        let n_splits = c.parse::<usize>("n_splits", "a positive integer");
        if let Some(m) = n_splits {
            c.check(m >= 1, "n_splits", "must be >= 1");
        }
        let selector = c.parse::<Selector>("selector", "a selector name");
        let corr_tol = c.parse::<f64>("corr_tol", "a number");
        if let Some(t) = corr_tol {
            c.check(t >= 0.0, "corr_tol", format!("must be >= 0, got {t}"));
        }
        let max_steps = c.optional::<usize>("max_steps", "an integer");
        let max_size = c.optional::<usize>("max_size", "an integer");
        let allow_large = c.bool("allow_large");
        let allow_collinear = c.bool("allow_collinear");
        let sse_floor = match raw.get("sse_floor") {
            "none" => Some(None),
            _ => c.parse::<f64>("sse_floor", "a number or `none`").map(Some),
        };
        if let Some(Some(f)) = sse_floor {
            c.check(f > 0.0, "sse_floor", format!("must be > 0, got {f}"));
        }
        let single_max = c.parse::<u32>("single_max", "an integer");
        let inter_total_max = c.parse::<u32>("inter_total_max", "an integer");
        if let Some(t) = inter_total_max {
            c.check(t >= 2 || t == 0, "inter_total_max", format!("must be 0 or >= 2, got {t}"));
        }
        let central = c.parse::<f64>("central", "a number");
        if let Some(p) = central {
            c.check(p > 0.0 && p < 1.0, "central", format!("must lie in (0, 1), got {p}"));
        }
        let pairing = c.parse::<Pairing>("pairing", "matched or cross");
        let dump_members = c.bool("dump_members");
        let sweep_train_sizes = c.list::<usize>("sweep_train_sizes", "integers");
        let sweep_mccm = c.list::<f64>("sweep_mccm", "numbers");
        if let Some(ms) = &sweep_mccm {
            for &m in ms {
                c.check(mccm_ok(m), "sweep_mccm", format!("{m} outside (0, 1]"));
            }
        }
        if let (Some(sel), Some(m), Some(false)) = (selector, mccm, allow_collinear) {
            c.check(
                sel == Selector::LassoLar || m <= 0.4,
                "mccm",
                format!("{sel} fits ordinary least squares and needs mccm <= 0.4 (got {m}); set allow_collinear to override"),
            );
        }

        if !c.errors.is_empty() {
            return Err(Error::Config(c.errors));
        }
        let selector_cfg = SelectorConfig {
            selector: selector.unwrap(),
            corr_tol: corr_tol.unwrap(),
            max_steps: max_steps.unwrap(),
            max_size: max_size.unwrap(),
            allow_large: allow_large.unwrap(),
        };
        let cv = CvConfig {
            train_size: train_size.unwrap(),
            n_splits: n_splits.unwrap(),
            selector: selector_cfg,
            sse_floor: sse_floor.unwrap(),
        };
        let template = raw.get("template");
        let response = raw.get("response");
        Ok(Self {
            manifest: PathBuf::from(manifest),
            response: (!response.is_empty()).then(|| response.to_string()),
            output: PathBuf::from(raw.get("output")),
            seed: seed.unwrap(),
            realign: RealignConfig {
                side: side.unwrap(),
                grid_n: grid_n.unwrap(),
                ridge: ridge.unwrap(),
                neighbors: neighbors.unwrap(),
            },
            max_order: max_order.unwrap(),
            pairwise: pairwise.unwrap(),
            mccm: mccm.unwrap(),
            cv,
            allow_collinear: allow_collinear.unwrap(),
            spatial: SpatialConfig {
                single_max: single_max.unwrap(),
                inter_total_max: inter_total_max.unwrap(),
                mccm: 0.95,
                cv: CvConfig {
                    selector: SelectorConfig {
                        selector: Selector::LassoLar,
                        ..selector_cfg
                    },
                    ..cv
                },
            },
            central: central.unwrap(),
            pairing: pairing.unwrap(),
            template: (!template.is_empty()).then(|| PathBuf::from(template)),
            dump_members: dump_members.unwrap(),
            sweep_train_sizes: sweep_train_sizes.unwrap(),
            sweep_mccm: sweep_mccm.unwrap(),
            hash: raw.hash(),
        })
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(vec!["seed: required for this command (--seed)".into()]))
    }
}

impl Default for RunConfig {
    /// Defaults with an empty manifest path; for library callers.
    fn default() -> Self {
        let mut raw = RawConfig::defaults();
        raw.set("manifest", "manifest.csv").expect("known key");
        Self::from_raw(&raw).expect("defaults validate")
    }
}
