//! Run configuration: every tunable with its default, loadable from a flat
//! `section.key = value` file (TOML dotted keys) and echoed back in the same
//! syntax.

use std::path::{Path, PathBuf};

use csae_core::adaptation::{FreezePolicy, FINETUNE_LR, PHASE2_LR};
use csae_core::baselines::{ForestConfig, FCAE_HIDDEN, FCAE_LATENT};
use csae_core::classifier::{ClassifierConfig, Pooling};
use csae_core::csae::CsaeConfig;
use csae_core::train::TrainConfig;
use toml::Value;

use crate::error::{AppError, AppResult};

/// Subsampling that keeps full experiments tractable on a workstation.
/// A step of `n` keeps every `n`-th segment; 1 keeps everything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskScale {
    pub ae_train_step: usize,
    pub clf_train_step: usize,
    pub eval_step: usize,
    /// Number of leave-one-subject-out folds to run; 0 runs all.
    pub max_folds: usize,
}

impl Default for DeskScale {
    fn default() -> Self {
        Self {
            ae_train_step: 1,
            clf_train_step: 1,
            eval_step: 1,
            max_folds: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub classes: usize,
    /// Directory of recording CSVs; `None` generates a synthetic cohort.
    pub data_dir: Option<PathBuf>,
    pub synthetic_subjects: usize,
    pub out: PathBuf,
    pub csae: CsaeConfig,
    pub classifier: ClassifierConfig,
    pub finetune: TrainConfig,
    pub policy: FreezePolicy,
    pub calib_fraction: f64,
    pub phase1: TrainConfig,
    pub phase2: TrainConfig,
    pub forest: ForestConfig,
    pub fcae_hidden: Vec<usize>,
    pub fcae_latent: usize,
    pub fcae_train: TrainConfig,
    pub lambdas: Vec<f64>,
    pub desk: DeskScale,
}

impl Default for RunConfig {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            seed: 0,
            classes: 6,
            data_dir: None,
            synthetic_subjects: 8,
            out: PathBuf::from("out"),
            csae: CsaeConfig::default(),
            classifier: ClassifierConfig::default(),
            finetune: TrainConfig {
                learning_rate: FINETUNE_LR,
                ..base
            },
            policy: FreezePolicy::FinalDenseOnly,
            calib_fraction: 1.0,
            phase1: base,
            phase2: TrainConfig {
                learning_rate: PHASE2_LR,
                ..base
            },
            forest: ForestConfig::default(),
            fcae_hidden: FCAE_HIDDEN.to_vec(),
            fcae_latent: FCAE_LATENT,
            fcae_train: base,
            lambdas: vec![0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-3],
            desk: DeskScale::default(),
        }
    }
}

fn float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

fn uint(v: &Value) -> Option<u64> {
    match v {
        Value::Integer(i) => u64::try_from(*i).ok(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

fn list<T>(v: &Value, each: fn(&Value) -> Option<T>) -> Option<Vec<T>> {
    match v {
        Value::Array(a) => a.iter().map(each).collect(),
        Value::String(s) => s
            .split(',')
            .map(|p| each(&Value::String(p.trim().to_string())))
            .collect(),
        _ => None,
    }
}

fn triple(v: &Value) -> Option<[usize; 3]> {
    list(v, uint)?
        .into_iter()
        .map(|x| x as usize)
        .collect::<Vec<_>>()
        .try_into()
        .ok()
}

fn fmt_f(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn fmt_list<T: Copy>(v: &[T], f: impl Fn(T) -> String) -> String {
    format!("[{}]", v.iter().map(|&x| f(x)).collect::<Vec<_>>().join(", "))
}

fn train_entries(prefix: &str, t: &TrainConfig, out: &mut Vec<(String, String)>) {
    let mut e = |k: &str, v: String| out.push((format!("{prefix}.{k}"), v));
    e("learning_rate", fmt_f(t.learning_rate));
    e("batch_size", t.batch_size.to_string());
    e("max_epochs", t.max_epochs.to_string());
    e("early_stop_patience", t.early_stop_patience.to_string());
    e("plateau_patience", t.plateau_patience.to_string());
    e("plateau_factor", fmt_f(t.plateau_factor));
    e("min_lr", fmt_f(t.min_lr));
    e("weight_decay", fmt_f(t.weight_decay));
    e("seed", t.seed.to_string());
}

fn set_train(t: &mut TrainConfig, key: &str, v: &Value) -> Option<()> {
    match key {
        "learning_rate" => t.learning_rate = float(v)?,
        "batch_size" => t.batch_size = uint(v)? as usize,
        "max_epochs" => t.max_epochs = uint(v)? as usize,
        "early_stop_patience" => t.early_stop_patience = uint(v)? as usize,
        "plateau_patience" => t.plateau_patience = uint(v)? as usize,
        "plateau_factor" => t.plateau_factor = float(v)?,
        "min_lr" => t.min_lr = float(v)?,
        "weight_decay" => t.weight_decay = float(v)?,
        "seed" => t.seed = uint(v)?,
        _ => return None,
    }
    Some(())
}

impl RunConfig {
    /// Every setting as `(dotted key, TOML literal)`, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut e = |k: &str, v: String| out.push((k.to_string(), v));
        e("seed", self.seed.to_string());
        e("classes", self.classes.to_string());
        e(
            "data.dir",
            format!(
                "{:?}",
                self.data_dir
                    .as_ref()
                    .map_or(String::new(), |p| p.display().to_string())
            ),
        );
        e("data.subjects", self.synthetic_subjects.to_string());
        e("out", format!("{:?}", self.out.display().to_string()));
        let c = &self.csae;
        e("csae.input_len", c.input_len.to_string());
        e("csae.filters", fmt_list(&c.filters, |x| x.to_string()));
        e("csae.kernel_sizes", fmt_list(&c.kernel_sizes, |x| x.to_string()));
        e("csae.strides", fmt_list(&c.strides, |x| x.to_string()));
        e("csae.alpha", fmt_f(c.alpha));
        e("csae.lambda", fmt_f(c.lambda));
        let k = &self.classifier;
        e(
            "classifier.head_conv",
            fmt_list(&[k.head_conv.0, k.head_conv.1, k.head_conv.2], |x| x.to_string()),
        );
        e("classifier.mlp_widths", fmt_list(&k.mlp_widths, |x| x.to_string()));
        e("classifier.alpha", fmt_f(k.alpha));
        e(
            "classifier.pooling",
            format!(
                "{:?}",
                if k.pooling == Pooling::Mean {
                    "mean"
                } else {
                    "attention"
                }
            ),
        );
        e("finetune.policy", format!("{:?}", self.policy.name()));
        e("finetune.calib_fraction", fmt_f(self.calib_fraction));
        e("forest.num_trees", self.forest.num_trees.to_string());
        e("forest.max_depth", self.forest.max_depth.to_string());
        e("forest.seed", self.forest.seed.to_string());
        e("fcae.hidden", fmt_list(&self.fcae_hidden, |x| x.to_string()));
        e("fcae.latent", self.fcae_latent.to_string());
        e("sweep.lambdas", fmt_list(&self.lambdas, fmt_f));
        e("desk.ae_train_step", self.desk.ae_train_step.to_string());
        e("desk.clf_train_step", self.desk.clf_train_step.to_string());
        e("desk.eval_step", self.desk.eval_step.to_string());
        e("desk.max_folds", self.desk.max_folds.to_string());
        train_entries("csae.train", &self.csae.train, &mut out);
        train_entries("classifier.train", &self.classifier.train, &mut out);
        train_entries("finetune.train", &self.finetune, &mut out);
        train_entries("expand.phase1", &self.phase1, &mut out);
        train_entries("expand.phase2", &self.phase2, &mut out);
        train_entries("fcae.train", &self.fcae_train, &mut out);
        out
    }

    pub fn to_config_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn set(&mut self, key: &str, v: &Value) -> AppResult<()> {
        let bad = || AppError::Config(format!("invalid value {v} for `{key}`"));
        let train_prefixes: [(&str, &mut TrainConfig); 6] = [
            ("csae.train.", &mut self.csae.train),
            ("classifier.train.", &mut self.classifier.train),
            ("finetune.train.", &mut self.finetune),
            ("expand.phase1.", &mut self.phase1),
            ("expand.phase2.", &mut self.phase2),
            ("fcae.train.", &mut self.fcae_train),
        ];
        for (prefix, t) in train_prefixes {
            if let Some(field) = key.strip_prefix(prefix) {
                return set_train(t, field, v)
                    .ok_or_else(|| AppError::Config(format!("unknown or invalid `{key}` = {v}")));
            }
        }
        let size = |v: &Value| uint(v).map(|x| x as usize).ok_or_else(bad);
        match key {
            "seed" => self.seed = uint(v).ok_or_else(bad)?,
            "classes" => self.classes = size(v)?,
            "data.dir" => {
                let s = v.as_str().ok_or_else(bad)?;
                self.data_dir = (!s.is_empty()).then(|| PathBuf::from(s));
            }
            "data.subjects" => self.synthetic_subjects = size(v)?,
            "out" => self.out = PathBuf::from(v.as_str().ok_or_else(bad)?),
            "csae.input_len" => self.csae.input_len = size(v)?,
            "csae.filters" => self.csae.filters = triple(v).ok_or_else(bad)?,
            "csae.kernel_sizes" => self.csae.kernel_sizes = triple(v).ok_or_else(bad)?,
            "csae.strides" => self.csae.strides = triple(v).ok_or_else(bad)?,
            "csae.alpha" => self.csae.alpha = float(v).ok_or_else(bad)?,
            "csae.lambda" => self.csae.lambda = float(v).ok_or_else(bad)?,
            "classifier.head_conv" => {
                let [c, k, s] = triple(v).ok_or_else(bad)?;
                self.classifier.head_conv = (c, k, s);
            }
            "classifier.mlp_widths" => {
                let w = list(v, uint).ok_or_else(bad)?;
                self.classifier.mlp_widths = [w.first(), w.get(1)].map(|x| x.copied().unwrap_or(0) as usize);
                if w.len() != 2 {
                    return Err(bad());
                }
            }
            "classifier.alpha" => self.classifier.alpha = float(v).ok_or_else(bad)?,
            "classifier.pooling" => {
                self.classifier.pooling = match v.as_str() {
                    Some("attention") => Pooling::Attention,
                    Some("mean") => Pooling::Mean,
                    _ => return Err(bad()),
                }
            }
            "finetune.policy" => {
                self.policy = v.as_str().and_then(FreezePolicy::from_name).ok_or_else(bad)?;
            }
            "finetune.calib_fraction" => self.calib_fraction = float(v).ok_or_else(bad)?,
            "forest.num_trees" => self.forest.num_trees = size(v)?,
            "forest.max_depth" => self.forest.max_depth = size(v)?,
            "forest.seed" => self.forest.seed = uint(v).ok_or_else(bad)?,
            "fcae.hidden" => {
                self.fcae_hidden = list(v, uint).ok_or_else(bad)?.into_iter().map(|x| x as usize).collect()
            }
            "fcae.latent" => self.fcae_latent = size(v)?,
            "sweep.lambdas" => self.lambdas = list(v, float).ok_or_else(bad)?,
            "desk.ae_train_step" => self.desk.ae_train_step = size(v)?,
            "desk.clf_train_step" => self.desk.clf_train_step = size(v)?,
            "desk.eval_step" => self.desk.eval_step = size(v)?,
            "desk.max_folds" => self.desk.max_folds = size(v)?,
            _ => return Err(AppError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_str(&mut self, text: &str) -> AppResult<()> {
        let table: toml::Table = text.parse().map_err(|e| AppError::Config(format!("{e}")))?;
        let mut flat = Vec::new();
        flatten("", &Value::Table(table), &mut flat);
        for (k, v) in flat {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> AppResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        self.apply_str(&text)
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.classes != 6 && self.classes != 10 {
            return Err(AppError::Config(format!(
                "classes must be 6 or 10, got {}",
                self.classes
            )));
        }
        if !(self.calib_fraction > 0.0 && self.calib_fraction <= 1.0) {
            return Err(AppError::Config("calib_fraction must lie in (0, 1]".into()));
        }
        let d = &self.desk;
        if d.ae_train_step == 0 || d.clf_train_step == 0 || d.eval_step == 0 {
            return Err(AppError::Config("desk steps must be >= 1".into()));
        }
        for t in [
            &self.csae.train,
            &self.classifier.train,
            &self.finetune,
            &self.phase1,
            &self.phase2,
            &self.fcae_train,
        ] {
            t.validate()?;
        }
        self.csae.output_kernel()?;
        Ok(())
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Table(t) => {
            for (k, child) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}
