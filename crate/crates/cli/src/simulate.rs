use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use effsel::simulation::{run_study, SimConfig, SimMetrics, SimNuisance};
use effsel::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{file_digest, sha256_hex, write_atomic, Run};

pub const PROGRESS: &str = "progress.json";
pub const METRICS: &str = "metrics.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "table1-row1")]
    Table1Row1,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON file: one setting, an array of settings, or `{"settings": [...]}`.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Replications per setting, overriding the configuration.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also write every replication record as `records_<key>.json`.
    #[arg(long)]
    pub records: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Wrapped { settings: Vec<Value> },
    Many(Vec<Value>),
    One(Value),
}

/// Parses every setting and reports all problems at once.
pub fn parse_settings(text: &str) -> Result<Vec<SimConfig>> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::invalid(format!("config is not valid JSON: {e}")))?;
    let values = match file {
        ConfigFile::Wrapped { settings } => settings,
        ConfigFile::Many(v) => v,
        ConfigFile::One(v) => vec![v],
    };
    if values.is_empty() {
        return Err(Error::invalid("config lists no settings"));
    }
    let mut settings = Vec::new();
    let mut problems = Vec::new();
    for (i, v) in values.into_iter().enumerate() {
        match serde_json::from_value::<SimConfig>(v) {
            Ok(cfg) => {
                problems.extend(cfg.violations().into_iter().map(|m| format!("setting {i}: {m}")));
                settings.push(cfg);
            }
            Err(e) => problems.push(format!("setting {i}: {e}")),
        }
    }
    if problems.is_empty() {
        Ok(settings)
    } else {
        Err(Error::invalid(format!("invalid config:\n  {}", problems.join("\n  "))))
    }
}

/// Stable identifier of a setting: digest of its canonical JSON.
pub fn setting_key(cfg: &SimConfig) -> String {
    let text = serde_json::to_string(cfg).expect("settings serialize");
    sha256_hex(text.as_bytes())[..16].to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Completed {
    config: SimConfig,
    summary: Summary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Summary {
    reps_ok: usize,
    reps_failed: usize,
    mean_model_size: f64,
    mean_num_significant: f64,
    fcr: f64,
    stie: f64,
    fsr: f64,
    snooping_fcr: f64,
    snooping_stie: f64,
    bias_mu_t: f64,
    ate_coverage_error: f64,
    failures: Vec<String>,
}

impl From<&SimMetrics> for Summary {
    fn from(m: &SimMetrics) -> Self {
        Summary {
            reps_ok: m.reps_ok,
            reps_failed: m.reps_failed,
            mean_model_size: m.mean_model_size,
            mean_num_significant: m.mean_num_significant,
            fcr: m.fcr,
            stie: m.stie,
            fsr: m.fsr,
            snooping_fcr: m.snooping_fcr,
            snooping_stie: m.snooping_stie,
            bias_mu_t: m.bias_mu_t,
            ate_coverage_error: m.ate_coverage_error,
            failures: m.failures.clone(),
        }
    }
}

/// Completed settings by key, with the digest of their result file.
type Progress = BTreeMap<String, String>;

fn load_progress(run: &Run) -> Progress {
    fs::read_to_string(run.out_dir().join(PROGRESS))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default()
}

fn result_name(key: &str) -> String {
    format!("setting_{key}.json")
}

/// A previous result is reused only if it is listed and its bytes still match.
fn reuse(run: &Run, progress: &Progress, key: &str) -> Option<Completed> {
    let path = run.out_dir().join(result_name(key));
    let digest = progress.get(key)?;
    if file_digest(&path).ok()? != *digest {
        return None;
    }
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

fn nuisance_label(n: &SimNuisance) -> String {
    match n {
        SimNuisance::RandomForest { out_of_bag: true, .. } => "rf".into(),
        SimNuisance::RandomForest { out_of_bag: false, .. } => "rf-in-sample".into(),
        SimNuisance::LassoCv { .. } => "lasso".into(),
        SimNuisance::Oracle => "oracle".into(),
        SimNuisance::Zero => "zero".into(),
    }
}

fn metrics_csv(rows: &[(String, Completed)]) -> String {
    let mut out = String::from(
        "setting,s_t,f_t,s_y,f_y,s_delta,f_delta,sigma,noise,n,p,reps,nuisance,\
         mean_model_size,mean_num_significant,fcr,stie,fsr,snooping_fcr,snooping_stie,\
         bias_mu_t,ate_coverage_error,reps_failed\n",
    );
    for (key, c) in rows {
        let (cfg, s) = (&c.config, &c.summary);
        out.push_str(&format!(
            "{key},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            cfg.s_t,
            cfg.f_t.label(),
            cfg.s_y,
            cfg.f_y.label(),
            cfg.s_delta,
            cfg.f_delta.label(),
            cfg.sigma,
            cfg.noise.label(),
            cfg.n,
            cfg.total_covariates(),
            cfg.reps,
            nuisance_label(&cfg.nuisance),
            s.mean_model_size,
            s.mean_num_significant,
            s.fcr,
            s.stie,
            s.fsr,
            s.snooping_fcr,
            s.snooping_stie,
            s.bias_mu_t,
            s.ate_coverage_error,
            s.reps_failed,
        ));
    }
    out
}

pub fn run(args: &SimulateArgs, seed: Option<u64>, run: &mut Run) -> Result<()> {
    let mut settings = match (&args.config, args.preset) {
        (Some(path), _) => {
            run.input(path)?;
            let text = fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
            parse_settings(&text)?
        }
        (None, Some(Preset::Table1Row1)) => vec![SimConfig::table1_row1()],
        (None, None) => return Err(Error::invalid("give a config file or --preset")),
    };
    for cfg in &mut settings {
        if let Some(r) = args.reps {
            cfg.reps = r;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
    }
    run.manifest.config = json!({ "settings": settings });
    if let Some(first) = settings.first() {
        run.manifest.seed = first.seed;
    }

    let mut progress = load_progress(run);
    let mut rows = Vec::with_capacity(settings.len());
    for (i, cfg) in settings.iter().enumerate() {
        let key = setting_key(cfg);
        if let Some(done) = reuse(run, &progress, &key) {
            eprintln!("setting {i} ({key}): already complete, skipped");
            rows.push((key.clone(), done));
            run.manifest.outputs.push(crate::output::FileDigest {
                path: result_name(&key),
                sha256: progress[&key].clone(),
            });
            continue;
        }
        eprintln!("setting {i} ({key}): {} replications", cfg.reps);
        let metrics = run_study(cfg)?;
        if metrics.reps_ok == 0 {
            return Err(Error::Numerical(format!(
                "setting {i}: every replication failed; first failure: {}",
                metrics.failures.first().map(String::as_str).unwrap_or("unknown")
            )));
        }
        for f in &metrics.failures {
            run.warn(format!("setting {i}: {f}"));
        }
        let done = Completed {
            config: cfg.clone(),
            summary: Summary::from(&metrics),
        };
        let bytes = serde_json::to_vec_pretty(&done)?;
        run.emit(&result_name(&key), &bytes)?;
        if args.records {
            run.emit(&format!("records_{key}.json"), &serde_json::to_vec(&metrics.records)?)?;
        }
        progress.insert(key.clone(), sha256_hex(&bytes));
        write_atomic(&run.out_dir().join(PROGRESS), &serde_json::to_vec_pretty(&progress)?)?;
        rows.push((key, done));
    }
    run.emit(METRICS, metrics_csv(&rows).as_bytes())?;
    Ok(())
}
