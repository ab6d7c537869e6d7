use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use l2calib::calibration::toys::poisson_draw;
use l2calib::calibration::{Method, Model, SeirModel, Simulator, StochasticSeir, Toy};
use l2calib::emulator::{fit_emulator, Design, Emulator, EmulatorConfig, EmulatorDocument};
use l2calib::inference::PhiMode;
use l2calib::optim::Bounds;
use l2calib::report::{band_csv, bands_table, fit_and_report, incubation_table, parse_band_csv, r0_table, EstimateReport, FitSettings};
use l2calib::rng::{rng_from_seed, stream_seed};
use l2calib::seir::{replicate_gillespie, seir_incidence_many, SeirParams, THETA_NAMES};
use l2calib::studies::{run_coverage_study, run_mse_study, toy_emulator, StudyConfig};
use l2calib::timeseries::{parse_cumulative_csv, to_daily_increments, SeriesDocument};
use l2calib::{Error, TimeSeries};

use crate::args::{EmulateArgs, FitArgs, IngestArgs, MethodArg, ModelKind, PhiArg, ReplicateArgs, ReportArgs, SimulateArgs, StudyKind};
use crate::{usage, CliError, CliResult};

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| usage(format!("--{flag} is required")))
}

fn date(s: &str, flag: &str) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| usage(format!("--{flag} {s:?}: expected YYYY-MM-DD ({e})")))
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(CliError::Runtime)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display())).map_err(CliError::Runtime)
}

/// Writes to `path`, or stdout when there is none.
fn emit(path: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(CliError::Runtime),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn toy_of(kind: ModelKind) -> Option<Toy> {
    match kind {
        ModelKind::Toy1d => Some(Toy::OneD),
        ModelKind::Toy3d => Some(Toy::ThreeD),
        _ => None,
    }
}

/// `name=value` pairs applied to a SEIR model.
fn seir_model(population: f64, fixes: &[String]) -> CliResult<SeirModel> {
    let mut m = SeirModel::new(population).map_err(|e| usage(e.to_string()))?;
    for f in fixes {
        let (name, value) = f.split_once('=').ok_or_else(|| usage(format!("--fix {f:?}: expected name=value")))?;
        let v: f64 = value.trim().parse().map_err(|_| usage(format!("--fix {f:?}: bad value")))?;
        m = m.fix(name.trim(), v).map_err(|e| usage(format!("--fix: {e} (names: {})", THETA_NAMES.join(", "))))?;
    }
    Ok(m)
}

/// Box for the free SEIR parameters when none is given.
fn default_seir_bounds(m: &SeirModel) -> Bounds {
    let n = m.population;
    let (lo, hi): (Vec<f64>, Vec<f64>) = m
        .free_names()
        .iter()
        .map(|&name| match name {
            "beta" => (0.01, 3.0),
            "kappa" => (0.01, 2.0),
            "gamma" => (0.01, 1.0),
            "i0" | "e0" => (1.0, (0.01 * n).max(2.0)),
            _ => (0.0, 0.5 * n),
        })
        .unzip();
    Bounds { lower: lo, upper: hi }
}

fn bounds_from(lower: &[f64], upper: &[f64], dim: usize, default: impl FnOnce() -> Bounds) -> CliResult<Bounds> {
    match (lower.is_empty(), upper.is_empty()) {
        (true, true) => Ok(default()),
        (false, false) => {
            if lower.len() != dim || upper.len() != dim {
                return Err(usage(format!("--lower/--upper need {dim} values each")));
            }
            Bounds::new(lower.to_vec(), upper.to_vec()).map_err(|e| usage(e.to_string()))
        }
        _ => Err(usage("--lower and --upper go together")),
    }
}

pub fn ingest(a: IngestArgs) -> CliResult<()> {
    let input = required(a.input, "input")?;
    let country = required(a.country, "country")?;
    let start = date(&required(a.start, "start")?, "start")?;
    let end = date(&required(a.end, "end")?, "end")?;
    let out = required(a.out, "out")?;
    if end <= start {
        return Err(usage(format!("--end {end} must be after --start {start}")));
    }
    let raw = read(&input)?;
    let cum = parse_cumulative_csv(&raw, &country).map_err(|e| match e {
        Error::NotFound(_) => usage(format!("{e} in {}", input.display())),
        e => e.into(),
    })?;
    let ts = to_daily_increments(&cum, start, end).map_err(|e| match e {
        Error::Range(_) => usage(e.to_string()),
        e => e.into(),
    })?;
    let doc = SeriesDocument::from_series(&country, &ts)?;
    emit(Some(&out), &serde_json::to_string_pretty(&doc)?)?;
    eprintln!("{country}: {} days, {} clamped", ts.n(), ts.clamp_count);
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let kind = required(a.model, "model")?;
    let seed = a.seed.unwrap_or(0);
    let mut csv = String::new();
    match kind {
        ModelKind::SeirDet | ModelKind::SeirStoch => {
            let population = required(a.population, "population")?;
            let days = required(a.days, "days")?;
            if days == 0 {
                return Err(usage("--days must be positive"));
            }
            let p = SeirParams::from_theta(&a.theta, population).map_err(|e| usage(e.to_string()))?;
            if kind == ModelKind::SeirDet {
                let xs: Vec<f64> = (0..days).map(|d| d as f64).collect();
                csv.push_str("day,incidence\n");
                for (d, v) in seir_incidence_many(&p, &xs)?.iter().enumerate() {
                    let _ = writeln!(csv, "{d},{v}");
                }
            } else {
                let reps = a.replicates.unwrap_or(1).max(1);
                let paths = replicate_gillespie(&p, days, reps, seed);
                csv.push_str("day");
                for k in 1..=reps {
                    let _ = write!(csv, ",rep{k}");
                }
                csv.push('\n');
                for d in 0..days {
                    let _ = write!(csv, "{d}");
                    for row in &paths {
                        let _ = write!(csv, ",{}", row[d]);
                    }
                    csv.push('\n');
                }
            }
        }
        ModelKind::Toy1d | ModelKind::Toy3d => {
            let toy = toy_of(kind).unwrap();
            let sim = toy.simulator();
            if a.theta.len() != sim.dim() {
                return Err(usage(format!("{} takes {} parameters, got {}", toy.name(), sim.dim(), a.theta.len())));
            }
            let k = a.points.unwrap_or(toy.default_n());
            if k < 2 {
                return Err(usage("--points must be at least 2"));
            }
            let dom = toy.domain();
            let xs: Vec<f64> = (0..k).map(|i| dom.to_physical(i as f64 / (k - 1) as f64)).collect();
            let f = sim.eval_many(&xs, &a.theta)?;
            let reps = a.replicates.unwrap_or(0);
            let mut rng = rng_from_seed(seed);
            csv.push_str("x,f");
            for r in 1..=reps {
                let _ = write!(csv, ",rep{r}");
            }
            csv.push('\n');
            for (x, v) in xs.iter().zip(&f) {
                let _ = write!(csv, "{x},{v}");
                for _ in 0..reps {
                    let _ = write!(csv, ",{}", poisson_draw(&mut rng, *v));
                }
                csv.push('\n');
            }
        }
    }
    emit(a.out.as_ref(), &csv)
}

/// What an emulator file emulates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Emulated {
    Toy1d,
    Toy3d,
    SeirStoch { seir: SeirModel },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmulatorFile {
    pub model: Emulated,
    pub emulator: EmulatorDocument,
}

pub fn emulate(a: EmulateArgs) -> CliResult<()> {
    let kind = required(a.model, "model")?;
    let m = required(a.m, "m")?;
    let reps = required(a.a, "a")?;
    let seed = a.seed.unwrap_or(0);
    let out = required(a.out, "out")?;
    if m < 2 || reps == 0 {
        return Err(usage("emulator design needs --m >= 2 and --a >= 1"));
    }
    let (model, emu) = match kind {
        ModelKind::Toy1d | ModelKind::Toy3d => {
            let toy = toy_of(kind).unwrap();
            let emu = toy_emulator(toy, m, reps, seed, &EmulatorConfig::default())?;
            (if toy == Toy::OneD { Emulated::Toy1d } else { Emulated::Toy3d }, emu)
        }
        ModelKind::SeirStoch => {
            let population = required(a.population, "population")?;
            let days = required(a.days, "days")?;
            let k = a.design_days.unwrap_or(15);
            if days < 2 || k < 2 || k > days {
                return Err(usage("need --days >= 2 and 2 <= --design-days <= --days"));
            }
            let seir = seir_model(population, &a.fix)?;
            let dim = seir.free_names().len();
            if a.lower.len() != dim || a.upper.len() != dim {
                return Err(usage(format!("--lower/--upper need {dim} values ({})", seir.free_names().join(","))));
            }
            let last = (days - 1) as f64;
            let xs: Vec<f64> = (0..k).map(|i| (i as f64 * last / (k - 1) as f64).round()).collect();
            let design = Design::crossed(&xs, m, &a.lower, &a.upper, reps, stream_seed(seed, "design")).map_err(|e| usage(e.to_string()))?;
            let stoch = StochasticSeir { model: seir.clone() };
            let outputs = stoch.run_design(&design, stream_seed(seed, "simulate"))?;
            (Emulated::SeirStoch { seir }, fit_emulator(&design, &outputs)?)
        }
        ModelKind::SeirDet => return Err(usage("only stochastic models are emulated")),
    };
    if emu.warning {
        eprintln!("warning: emulator hyperparameter search fell back to defaults");
    }
    let file = EmulatorFile { model, emulator: emu.to_document() };
    emit(Some(&out), &serde_json::to_string(&file)?)
}

fn load_emulator(path: &Path) -> CliResult<(Emulated, Emulator)> {
    let f: EmulatorFile = read_json(path)?;
    Ok((f.model, Emulator::from_document(f.emulator)?))
}

fn settings(a: &FitArgs) -> FitSettings {
    let mut s = FitSettings::default();
    s.method = match a.method.unwrap_or(MethodArg::L2) {
        MethodArg::L2 => Method::L2,
        MethodArg::Ls => Method::Ls,
        MethodArg::Mle => Method::Mle,
    };
    s.level = a.level.unwrap_or(0.95);
    s.phi_mode = match a.phi.unwrap_or(PhiArg::Auto) {
        PhiArg::One => PhiMode::One,
        PhiArg::Estimated => PhiMode::Estimated,
        PhiArg::Auto => PhiMode::Auto,
    };
    s
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    let kind = required(a.model, "model")?;
    let settings = settings(&a);
    if !(settings.level > 0.0 && settings.level < 1.0) {
        return Err(usage("--level must lie in (0, 1)"));
    }
    let (data, mut label): (TimeSeries, Option<String>) = match &a.data {
        Some(p) => {
            let doc: SeriesDocument = read_json(p)?;
            let c = doc.country.clone();
            (doc.into_series()?, Some(c))
        }
        None => match toy_of(kind) {
            Some(toy) => (toy.sample_data(a.n.unwrap_or(toy.default_n()), a.seed.unwrap_or(1))?, None),
            None => return Err(usage("--data is required for SEIR models")),
        },
    };
    if a.country.is_some() {
        label = a.country.clone();
    }

    let fitted = match kind {
        ModelKind::SeirDet => {
            let seir = seir_model(required(a.population, "population")?, &a.fix)?;
            let bounds = bounds_from(&a.lower, &a.upper, seir.dim(), || default_seir_bounds(&seir))?;
            fit_and_report(&data, Model::Direct(&seir), &bounds, &settings, Some(&seir))?
        }
        ModelKind::SeirStoch => {
            let (what, emu) = load_emulator(&required(a.emulator.clone(), "emulator")?)?;
            let Emulated::SeirStoch { seir } = what else {
                return Err(usage("the emulator is not of the stochastic SEIR model"));
            };
            let d = &emu.design;
            let bounds = bounds_from(&a.lower, &a.upper, emu.theta_dim(), || Bounds { lower: d.lower[1..].to_vec(), upper: d.upper[1..].to_vec() })?;
            fit_and_report(&data, Model::emulated(&emu), &bounds, &settings, Some(&seir))?
        }
        ModelKind::Toy1d | ModelKind::Toy3d => {
            let toy = toy_of(kind).unwrap();
            let sim = toy.simulator();
            let bounds = bounds_from(&a.lower, &a.upper, sim.dim(), || toy.bounds())?;
            match &a.emulator {
                Some(p) => {
                    let (what, emu) = load_emulator(p)?;
                    let matches = matches!((what, toy), (Emulated::Toy1d, Toy::OneD) | (Emulated::Toy3d, Toy::ThreeD));
                    if !matches {
                        return Err(usage(format!("the emulator is not of {}", toy.name())));
                    }
                    fit_and_report(&data, Model::emulated(&emu), &bounds, &settings, None)?
                }
                None => fit_and_report(&data, Model::Direct(&sim), &bounds, &settings, None)?,
            }
        }
    };

    let mut report = fitted.report;
    report.country = label;
    if let Some(b) = &a.band {
        emit(Some(b), &band_csv(&fitted.band))?;
    }
    emit(a.out.as_ref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

pub fn replicate(a: ReplicateArgs) -> CliResult<()> {
    let toy = match required(a.study, "study")? {
        StudyKind::Toy1d => Toy::OneD,
        StudyKind::Toy3d => Toy::ThreeD,
        StudyKind::MleInconsistency => Toy::MleInconsistency,
    };
    let mut cfg = StudyConfig::new(toy, a.replicates.unwrap_or(100), a.seed.unwrap_or(0));
    if let Some(n) = a.n {
        cfg.n = n;
    }
    cfg.with_emulator = a.emulator;
    if let Some(m) = a.m {
        cfg.emulator_m = m;
    }
    if let Some(r) = a.a {
        cfg.emulator_a = r;
    }
    if let Some(l) = a.level {
        cfg.level = l;
    }
    if a.emulator && toy == Toy::MleInconsistency {
        return Err(usage("the mle-inconsistency study has no emulator"));
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let result = if a.coverage { run_coverage_study(&cfg)? } else { run_mse_study(&cfg)? };
    if let Some(p) = &a.summary {
        emit(Some(p), &serde_json::to_string_pretty(&result)?)?;
    }
    emit(a.out.as_ref(), &result.to_csv())
}

pub fn report(a: ReportArgs) -> CliResult<()> {
    if a.reports.is_empty() {
        return Err(usage("--reports needs at least one file"));
    }
    let dir = required(a.out_dir, "out-dir")?;
    if !a.bands.is_empty() && a.bands.len() != a.reports.len() {
        return Err(usage(format!("{} reports but {} bands", a.reports.len(), a.bands.len())));
    }
    let reports: Vec<EstimateReport> = a.reports.iter().map(|p| read_json(p)).collect::<CliResult<_>>()?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut est = String::from("country,parameter,estimate,lo,hi\n");
    for (k, r) in reports.iter().enumerate() {
        let c = r.country.clone().unwrap_or_else(|| format!("fit{}", k + 1));
        for (name, iv) in r.param_names.iter().zip(r.intervals()?) {
            let _ = writeln!(est, "{c},{name},{},{},{}", iv.estimate, iv.lower, iv.upper);
        }
    }
    let mut written = vec!["estimates.csv"];
    emit(Some(&dir.join("estimates.csv")), &est)?;

    let with_derived = reports.iter().filter(|r| r.derived.is_some()).count();
    if with_derived == reports.len() {
        emit(Some(&dir.join("r0.csv")), &r0_table(&reports)?)?;
        emit(Some(&dir.join("incubation.csv")), &incubation_table(&reports)?)?;
        written.extend(["r0.csv", "incubation.csv"]);
    } else if with_derived > 0 {
        return Err(usage("either all reports or none must carry SEIR quantities"));
    }

    if !a.bands.is_empty() {
        let bands = a
            .bands
            .iter()
            .map(|p| {
                let text = String::from_utf8(read(p)?).with_context(|| format!("{} is not UTF-8", p.display()))?;
                parse_band_csv(&text).map_err(CliError::from)
            })
            .collect::<CliResult<Vec<_>>>()?;
        emit(Some(&dir.join("bands.csv")), &bands_table(&reports, &bands)?)?;
        written.push("bands.csv");
    }
    eprintln!("wrote {} in {}", written.join(", "), dir.display());
    Ok(())
}
