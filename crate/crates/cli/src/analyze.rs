use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use effsel::dataset::{self, DesignSpec, Schema};
use effsel::lasso::LambdaRule;
use effsel::nuisance::{self, CrossFitMode, ForestParams, LassoCvParams, Learner};
use effsel::pivot::{self, AnalysisConfig, LambdaChoice};
use effsel::report::{self, ReportMode, SelectiveReport};
use effsel::robinson::{self, InterceptMode};
use effsel::{rng, Error, Result};
use serde_json::json;

use crate::output::Run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    NaiveLinear,
    Full,
    Univariate,
    Selective,
    Snooping,
    All,
}

impl Method {
    const EACH: [Method; 5] = [
        Method::NaiveLinear,
        Method::Full,
        Method::Univariate,
        Method::Selective,
        Method::Snooping,
    ];

    fn file_name(self) -> &'static str {
        match self {
            Method::NaiveLinear => "naive_linear.csv",
            Method::Full => "full.csv",
            Method::Univariate => "univariate.csv",
            Method::Selective => "selective.csv",
            Method::Snooping => "snooping.csv",
            Method::All => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NuisanceArg {
    Rf,
    Lasso,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CrossFitArg {
    None,
    #[value(name = "2fold")]
    TwoFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RfPredictions {
    Oob,
    InSample,
}

/// `mult=1.1,draws=200,scale=kkt`; missing keys keep their defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRuleArg(pub LambdaRule);

impl FromStr for LambdaRuleArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut rule = LambdaRule::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got '{part}'"))?;
            match key.trim() {
                "mult" | "multiplier" => {
                    rule.multiplier = value.parse().map_err(|_| format!("bad multiplier '{value}'"))?
                }
                "draws" => rule.draws = value.parse().map_err(|_| format!("bad draw count '{value}'"))?,
                "scale" => {
                    rule.kkt_scale = match value.trim() {
                        "kkt" => true,
                        "objective" => false,
                        other => return Err(format!("scale must be kkt or objective, got '{other}'")),
                    }
                }
                other => return Err(format!("unknown lambda-rule key '{other}'")),
            }
        }
        if !(rule.multiplier > 0.0) || rule.draws == 0 {
            return Err("lambda-rule needs mult > 0 and draws ≥ 1".into());
        }
        Ok(LambdaRuleArg(rule))
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// CSV file with a header row.
    pub input: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub outcome: String,
    /// Treatment column (binary or continuous).
    #[arg(long)]
    pub treatment: String,
    /// Covariate columns; every other column when omitted.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Candidate effect modifiers (after categorical encoding); all covariates when omitted.
    #[arg(long, value_delimiter = ',')]
    pub modifiers: Option<Vec<String>>,
    /// Add every pairwise product of the effect modifiers.
    #[arg(long)]
    pub interactions: bool,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    pub method: Vec<Method>,
    #[arg(long, value_enum, default_value = "rf")]
    pub nuisance: NuisanceArg,
    #[arg(long = "cross-fit", value_enum, default_value = "none")]
    pub cross_fit: CrossFitArg,
    #[arg(long, default_value_t = 500)]
    pub rf_trees: usize,
    #[arg(long, default_value_t = 20)]
    pub rf_nodesize: usize,
    /// Forest predictions at training rows when not cross-fitting.
    #[arg(long, value_enum, default_value = "oob")]
    pub rf_predictions: RfPredictions,
    /// Fixed penalty for the selection lasso.
    #[arg(long, conflicts_with = "lambda_rule")]
    pub lambda: Option<f64>,
    /// Penalty rule, e.g. `mult=1.1,draws=200,scale=kkt`.
    #[arg(long)]
    pub lambda_rule: Option<LambdaRuleArg>,
    /// Known noise scale; estimated from the full regression otherwise.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Miscoverage level of every interval.
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    /// Center ỹ and X̃ and drop the intercept instead of keeping it unpenalized.
    #[arg(long)]
    pub center_drop_alpha: bool,
}

impl AnalyzeArgs {
    fn methods(&self) -> Vec<Method> {
        if self.method.contains(&Method::All) {
            return Method::EACH.to_vec();
        }
        Method::EACH.into_iter().filter(|m| self.method.contains(m)).collect()
    }

    fn learner(&self, seed: u64) -> Learner {
        match self.nuisance {
            NuisanceArg::Rf => Learner::RandomForest(ForestParams {
                n_trees: self.rf_trees,
                min_node_size: self.rf_nodesize,
                out_of_bag: self.rf_predictions == RfPredictions::Oob,
                seed: rng::child_seed(seed, 1),
                ..Default::default()
            }),
            NuisanceArg::Lasso => Learner::LassoCv(LassoCvParams {
                seed: rng::child_seed(seed, 1),
                ..Default::default()
            }),
            NuisanceArg::Zero => Learner::Zero,
        }
    }

    fn lambda(&self) -> Result<LambdaChoice> {
        match (self.lambda, self.lambda_rule) {
            (Some(0.0), _) => Err(Error::ZeroLambda),
            (Some(l), _) if !(l > 0.0 && l.is_finite()) => Err(Error::invalid(format!("--lambda must be positive, got {l}"))),
            (Some(l), _) => Ok(LambdaChoice::Fixed(l)),
            (None, Some(r)) => Ok(LambdaChoice::Rule(r.0)),
            (None, None) => Ok(LambdaChoice::default()),
        }
    }

    fn config_json(&self, seed: u64) -> serde_json::Value {
        json!({
            "input": self.input.display().to_string(),
            "outcome": self.outcome,
            "treatment": self.treatment,
            "covariates": self.covariates,
            "modifiers": self.modifiers,
            "interactions": self.interactions,
            "methods": self.methods().iter().map(|m| m.file_name().trim_end_matches(".csv")).collect::<Vec<_>>(),
            "nuisance": format!("{:?}", self.nuisance).to_lowercase(),
            "cross_fit": match self.cross_fit { CrossFitArg::None => "none", CrossFitArg::TwoFold => "2fold" },
            "rf_trees": self.rf_trees,
            "rf_nodesize": self.rf_nodesize,
            "rf_predictions": match self.rf_predictions { RfPredictions::Oob => "oob", RfPredictions::InSample => "in-sample" },
            "lambda": self.lambda().ok(),
            "sigma": self.sigma,
            "q": self.q,
            "center_drop_alpha": self.center_drop_alpha,
            "seed": seed,
        })
    }
}

fn modifier_columns(names: &[String], wanted: &Option<Vec<String>>) -> Result<Vec<usize>> {
    match wanted {
        None => Ok((0..names.len()).collect()),
        Some(w) => w
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::invalid(format!("effect modifier '{n}' is not a covariate column")))
            })
            .collect(),
    }
}

/// Fixed-model report over each column on its own.
fn univariate_report(tr: &robinson::TransformedRegression, sigma: Option<f64>, q: f64) -> Result<SelectiveReport> {
    let mut rows = Vec::with_capacity(tr.p());
    let mut sigmas = Vec::with_capacity(tr.p());
    for j in 0..tr.p() {
        let fixed = robinson::fixed_model_inference(tr, &[j], q, sigma)?;
        sigmas.push(fixed.sigma2_hat.sqrt());
        rows.extend(SelectiveReport::from_fixed(&fixed, &[j], ReportMode::Fixed).rows);
    }
    let mut report = SelectiveReport {
        rows,
        sigma_used: sigma.unwrap_or(f64::NAN),
        lambda_used: 0.0,
        mode: ReportMode::Fixed,
        diagnostics: None,
        notes: Vec::new(),
    };
    if sigma.is_none() {
        let (lo, hi) = sigmas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
        report.sigma_used = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
        report.notes.push(format!("σ̂ is estimated per column; range [{lo}, {hi}], mean reported"));
    }
    Ok(report)
}

pub fn run(args: &AnalyzeArgs, seed: u64, run: &mut Run) -> Result<()> {
    if !(args.q > 0.0 && args.q < 1.0) {
        return Err(Error::invalid(format!("--q must lie in (0, 1), got {}", args.q)));
    }
    let methods = args.methods();
    let lambda = args.lambda()?;
    run.manifest.config = args.config_json(seed);
    run.input(&args.input)?;

    let schema = Schema {
        outcome: args.outcome.clone(),
        treatment: args.treatment.clone(),
        covariates: args.covariates.clone(),
    };
    let loaded = dataset::load_csv(&args.input, &schema)?;
    if loaded.dropped_rows > 0 {
        run.warn(format!(
            "dropped {} of {} rows with missing cells",
            loaded.dropped_rows, loaded.file_rows
        ));
    }
    let d = loaded.dataset;
    let spec = DesignSpec {
        effect_modifier_columns: modifier_columns(&d.covariate_names, &args.modifiers)?,
        include_interactions: args.interactions,
    };
    let design = dataset::expand_interactions(&d, &spec)?;

    let needs_nuisance = methods.iter().any(|&m| m != Method::NaiveLinear);
    let mode = if args.center_drop_alpha {
        InterceptMode::CenterDropAlpha
    } else {
        InterceptMode::TreatmentColumn
    };
    let cross = match args.cross_fit {
        CrossFitArg::None => CrossFitMode::None,
        CrossFitArg::TwoFold => CrossFitMode::TwoFold {
            seed: rng::child_seed(seed, 2),
        },
    };
    let mut diagnostics = serde_json::Map::new();
    diagnostics.insert("n".into(), json!(d.n()));
    diagnostics.insert("p".into(), json!(d.p()));
    diagnostics.insert("effect_modifiers".into(), json!(design.covariate_names));
    diagnostics.insert("dropped_rows".into(), json!(loaded.dropped_rows));

    let mut transformed = None;
    if needs_nuisance {
        let nf = nuisance::cross_fit(&d, &args.learner(seed), cross)?;
        for w in &nf.warnings {
            run.warn(w.clone());
        }
        let tr = robinson::transform(&d, &nf, &spec, mode)?;
        let ate = robinson::estimate_ate(&tr, args.q)?;
        diagnostics.insert(
            "ate".into(),
            json!({"estimate": ate.estimate, "std_error": ate.std_error, "ci_low": ate.ci_low, "ci_high": ate.ci_high}),
        );
        transformed = Some(tr);
    }

    let cfg = AnalysisConfig {
        q: args.q,
        sigma: args.sigma,
        lambda,
        seed: rng::child_seed(seed, 3),
        ..Default::default()
    };
    let selection = match (&transformed, methods.iter().any(|m| matches!(m, Method::Selective | Method::Snooping))) {
        (Some(tr), true) => Some(pivot::select(tr, &cfg)?),
        _ => None,
    };

    let mut method_diagnostics = serde_json::Map::new();
    for &m in &methods {
        let report = match m {
            Method::NaiveLinear => {
                let fixed = robinson::naive_linear_model(&design, args.q)?;
                let columns: Vec<usize> = (0..design.p()).collect();
                SelectiveReport::from_fixed(&fixed, &columns, ReportMode::Fixed)
            }
            Method::Full => {
                let tr = transformed.as_ref().expect("nuisance fitted");
                let all: Vec<usize> = (0..tr.p()).collect();
                let fixed = robinson::fixed_model_inference(tr, &all, args.q, args.sigma)?;
                SelectiveReport::from_fixed(&fixed, &all, ReportMode::Fixed)
            }
            Method::Univariate => univariate_report(transformed.as_ref().expect("nuisance fitted"), args.sigma, args.q)?,
            Method::Selective => pivot::selective_report(
                transformed.as_ref().expect("nuisance fitted"),
                selection.as_ref().expect("lasso fitted"),
                args.q,
            )?,
            Method::Snooping => pivot::snooping_report(
                transformed.as_ref().expect("nuisance fitted"),
                selection.as_ref().expect("lasso fitted"),
                args.q,
            )?,
            Method::All => unreachable!(),
        };
        for note in &report.notes {
            run.warn(format!("{}: {note}", m.file_name().trim_end_matches(".csv")));
        }
        method_diagnostics.insert(m.file_name().trim_end_matches(".csv").into(), report::diagnostics_json(&report));
        run.emit(m.file_name(), report::write_report_csv(&report)?.as_bytes())?;
    }
    diagnostics.insert("methods".into(), serde_json::Value::Object(method_diagnostics));
    run.emit("diagnostics.json", &serde_json::to_vec_pretty(&diagnostics)?)?;
    Ok(())
}
