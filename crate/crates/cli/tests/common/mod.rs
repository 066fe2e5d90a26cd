#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn effsel() -> Command {
    Command::new(env!("CARGO_BIN_EXE_effsel"))
}

pub fn run(args: &[&str]) -> Output {
    effsel().args(args).output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Twenty survey-style variables that expand to thirty design columns: three
/// categorical blocks (race, marital status, education), gender, age, income,
/// a cigarette count and thirteen yes/no conditions. Overweight status is the
/// treatment and log₂ CRP the outcome; the effect varies with gender and age.
pub const BINARY: [&str; 13] = [
    "Vigorous work",
    "Vigorous recreation",
    "Ever smoked",
    "Estrogen",
    "Bronchitis",
    "Asthma",
    "Emphysema",
    "Thyroid problem",
    "Arthritis",
    "Heart attack",
    "Stroke",
    "Liver condition",
    "Gout",
];

const RACE: [&str; 5] = ["Black", "Hispanic", "Mexican", "Other", "White"];
const MARITAL: [&str; 6] = ["Divorced", "Living with partner", "Married", "Never married", "Separated", "Widowed"];
const EDUCATION: [&str; 5] = ["9-11th grade", "College grad.", "High school", "Less than 9th grade", "Some college"];

pub fn nhanes_like_csv(n: usize, seed: u64, missing_rows: &[usize]) -> String {
    let mut r = effsel::rng::stream(seed, 0);
    let mut out = String::from("log2_crp,overweight,Gender,Age,Income,Race,Marital,Education,Cigarettes");
    for b in BINARY {
        write!(out, ",{b}").unwrap();
    }
    out.push('\n');
    for i in 0..n {
        let female = r.random::<bool>();
        let age: f64 = r.random_range(21.0..85.0);
        let income: f64 = r.random_range(0.0..5.0);
        let race = RACE[r.random_range(0..RACE.len())];
        let marital = MARITAL[r.random_range(0..MARITAL.len())];
        let education = EDUCATION[r.random_range(0..EDUCATION.len())];
        let smoker = r.random::<f64>() < 0.4;
        let cigarettes = if smoker { r.random_range(0..600) } else { 0 };
        let flags: Vec<u8> = BINARY
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let base = if k < 3 { 0.35 } else { 0.06 };
                u8::from(r.random::<f64>() < base + 0.002 * (age - 50.0).max(0.0))
            })
            .collect();
        let logit = -0.3 + 0.01 * (age - 50.0) - 0.15 * income + if female { -0.2 } else { 0.1 };
        let overweight = u8::from(r.random::<f64>() < 1.0 / (1.0 + (-logit).exp()));
        let baseline = -1.5 + 0.01 * age + 0.3 * f64::from(female) - 0.1 * income + 0.4 * f64::from(flags[9]);
        let effect = 0.8 + 0.5 * f64::from(female) - 0.02 * (age - 50.0);
        let noise: f64 = StandardNormal.sample(&mut r);
        let y = baseline + f64::from(overweight) * effect + 1.2 * noise;
        let income_cell = if missing_rows.contains(&i) { String::new() } else { format!("{income:.3}") };
        write!(
            out,
            "{y:.5},{overweight},{},{age:.1},{income_cell},{race},{marital},{education},{cigarettes}",
            if female { "Female" } else { "Male" }
        )
        .unwrap();
        for f in flags {
            write!(out, ",{f}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Header and rows of a report, skipping the `#` footer line.
pub fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

/// Kolmogorov–Smirnov distance between the sample and Unif(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &u)| ((i + 1) as f64 / m - u).max(u - i as f64 / m))
        .fold(0.0, f64::max)
}
