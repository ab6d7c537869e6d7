//! One self-contained record per calibration: the kernel fit and its
//! goodness of fit, the estimate, its sandwich covariance, derived SEIR
//! quantities and a pointwise predictive band.
//!
//! Also the plain-CSV renderings used for plotting elsewhere.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibration::{fit_l2, fit_ls, fit_mle, CalibProblem, CalibResult, Method, Model, SeirModel};
use crate::error::{Error, Result};
use crate::inference::{
    predictive_band_det, predictive_band_stoch, rows, sandwich_l2, sandwich_l2_emulated, sandwich_ls, sandwich_mle, seir_derived, Band,
    DerivedIntervals, Interval, PhiMode, PlugIn,
};
use crate::kernel::{deviance_gof, fit_kpr_cv, CvConfig, GofReport, KernelFit};
use crate::optim::{Bounds, OptimizerConfig};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSettings {
    /// `L2`, `Ls` or `Mle`; the emulated form follows from the model.
    pub method: Method,
    pub level: f64,
    pub phi_mode: PhiMode,
    pub cv: CvConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { method: Method::L2, level: 0.95, phi_mode: PhiMode::Auto, cv: CvConfig::default(), optimizer: OptimizerConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    pub method: Method,
    pub param_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    /// Deviance dispersion estimate of the kernel fit.
    pub phi_hat: f64,
    /// Multiplier actually applied to the covariance.
    pub phi_used: f64,
    pub gof_p_value: f64,
    pub level: f64,
    pub n: usize,
    pub criterion: f64,
    pub boundary_contact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<DerivedIntervals>,
}

impl EstimateReport {
    /// Wald interval for each parameter.
    pub fn intervals(&self) -> Result<Vec<Interval>> {
        let z = crate::inference::z_value(self.level)?;
        Ok(self
            .theta_hat
            .iter()
            .zip(&self.std_errors)
            .map(|(&t, &s)| Interval { estimate: t, lower: t - z * s, upper: t + z * s, level: self.level })
            .collect())
    }
}

/// Everything a fit produces.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub report: EstimateReport,
    pub band: Band,
    pub lambda_hat: KernelFit,
    pub gof: GofReport,
    pub result: CalibResult,
}

/// Kernel fit with cross-validated smoothing, the chosen estimator, its
/// covariance and a band at the observed inputs. `seir` adds R0 and
/// incubation intervals.
pub fn fit_and_report(data: &TimeSeries, model: Model, bounds: &Bounds, settings: &FitSettings, seir: Option<&SeirModel>) -> Result<Fitted> {
    let lambda_hat = fit_kpr_cv(data, &settings.cv)?;
    let gof = deviance_gof(&lambda_hat, data)?;
    let phi = settings.phi_mode.resolve(&gof);
    let problem = CalibProblem::new(data, &lambda_hat, model, bounds.clone(), settings.optimizer.clone())?;
    let plug = PlugIn::from_problem(&problem);
    let sim = model.as_simulator();

    let (result, sw) = match settings.method {
        Method::L2 | Method::L2Emu => {
            let r = fit_l2(&problem)?;
            let sw = match model {
                Model::Direct(s) => sandwich_l2(&plug, s, &r.theta_hat, phi)?,
                Model::Emulated(e, term) => sandwich_l2_emulated(&plug, e, term, &r.theta_hat, phi)?,
            };
            (r, sw)
        }
        Method::Ls | Method::LsEmu => {
            let r = fit_ls(data, model, bounds, &settings.optimizer)?;
            let sw = sandwich_ls(&plug, sim, &r.theta_hat, phi)?;
            (r, sw)
        }
        Method::Mle | Method::MleEmu => {
            let r = fit_mle(data, model, bounds, &settings.optimizer)?;
            let sw = sandwich_mle(&plug, sim, &r.theta_hat, phi)?;
            (r, sw)
        }
    };

    let xs = data.x_physical();
    let band = match model {
        Model::Direct(s) => predictive_band_det(s, &result.theta_hat, &sw.cov, &xs, settings.level)?,
        Model::Emulated(e, _) => predictive_band_stoch(e, &result.theta_hat, &sw.cov, &xs, settings.level)?,
    };
    let derived = seir.map(|m| seir_derived(m, &result.theta_hat, &sw.cov, settings.level)).transpose()?;

    let report = EstimateReport {
        country: None,
        method: result.method,
        // an emulated SEIR fit still reports the SEIR names
        param_names: seir.map_or_else(|| sim.param_names(), |m| m.free_names().iter().map(|s| s.to_string()).collect()),
        theta_hat: result.theta_hat.clone(),
        cov: rows(&sw.cov),
        std_errors: sw.std_errors(),
        phi_hat: gof.phi_hat,
        phi_used: phi,
        gof_p_value: gof.p_value,
        level: settings.level,
        n: data.n(),
        criterion: result.criterion,
        boundary_contact: result.boundary_contact,
        derived,
    };
    Ok(Fitted { report, band, lambda_hat, gof, result })
}

/// `x,fit,lo,hi` rows.
pub fn band_csv(band: &Band) -> String {
    let mut s = String::from("x,fit,lo,hi\n");
    for i in 0..band.x.len() {
        let _ = writeln!(s, "{},{},{},{}", band.x[i], band.fit[i], band.lower[i], band.upper[i]);
    }
    s
}

pub fn parse_band_csv(text: &str) -> Result<Band> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Format(format!("band CSV header: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != ["x", "fit", "lo", "hi"] {
        return Err(Error::Format("band CSV must have columns x,fit,lo,hi".into()));
    }
    let mut band = Band { x: vec![], fit: vec![], lower: vec![], upper: vec![], level: f64::NAN };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("band CSV row {}: {e}", i + 2)))?;
        let v = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("band CSV row {}: {e}", i + 2)))?;
        band.x.push(v[0]);
        band.fit.push(v[1]);
        band.lower.push(v[2]);
        band.upper.push(v[3]);
    }
    Ok(band)
}

fn label(r: &EstimateReport, k: usize) -> String {
    r.country.clone().unwrap_or_else(|| format!("fit{}", k + 1))
}

/// `country,<name>,lo,hi` with one row per report; `pick` selects the
/// derived quantity. Reports without it are an error.
fn derived_table(reports: &[EstimateReport], name: &str, pick: fn(&DerivedIntervals) -> &Interval) -> Result<String> {
    let mut s = format!("country,{name},lo,hi\n");
    for (k, r) in reports.iter().enumerate() {
        let d = r.derived.as_ref().ok_or_else(|| Error::Argument(format!("report {} has no derived quantities", label(r, k))))?;
        let i = pick(d);
        let _ = writeln!(s, "{},{},{},{}", label(r, k), i.estimate, i.lower, i.upper);
    }
    Ok(s)
}

pub fn r0_table(reports: &[EstimateReport]) -> Result<String> {
    derived_table(reports, "R0", |d| &d.r0)
}

pub fn incubation_table(reports: &[EstimateReport]) -> Result<String> {
    derived_table(reports, "incubation", |d| &d.incubation)
}

/// Bands of several fits stacked as `country,x,fit,lo,hi`.
pub fn bands_table(reports: &[EstimateReport], bands: &[Band]) -> Result<String> {
    if reports.len() != bands.len() {
        return Err(Error::Argument(format!("{} reports but {} bands", reports.len(), bands.len())));
    }
    let mut s = String::from("country,x,fit,lo,hi\n");
    for (k, (r, b)) in reports.iter().zip(bands).enumerate() {
        let c = label(r, k);
        for i in 0..b.x.len() {
            let _ = writeln!(s, "{c},{},{},{},{}", b.x[i], b.fit[i], b.lower[i], b.upper[i]);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Toy;

    #[test]
    fn toy_report_round_trip() {
        let toy = Toy::OneD;
        let data = toy.sample_data(50, 1).unwrap();
        let sim = toy.simulator();
        let fitted = fit_and_report(&data, Model::Direct(&sim), &toy.bounds(), &FitSettings::default(), None).unwrap();
        let r = &fitted.report;
        assert!((r.theta_hat[0] + 0.1789).abs() < 0.15, "{:?}", r.theta_hat);
        assert_eq!(r.cov.len(), 1);
        assert!(r.derived.is_none());
        let json = serde_json::to_string(r).unwrap();
        assert!(!json.contains("derived"));
        let back: EstimateReport = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, r);

        let csv = band_csv(&fitted.band);
        assert_eq!(csv.lines().count(), 51);
        let b = parse_band_csv(&csv).unwrap();
        assert_eq!(b.x, fitted.band.x);
        assert_eq!(b.upper, fitted.band.upper);
    }

    #[test]
    fn tables() {
        let iv = |e: f64| Interval { estimate: e, lower: e - 0.1, upper: e + 0.1, level: 0.95 };
        let rep = |c: &str, r0: f64| EstimateReport {
            country: Some(c.into()),
            method: Method::L2,
            param_names: vec!["beta".into()],
            theta_hat: vec![0.3],
            cov: vec![vec![0.01]],
            std_errors: vec![0.1],
            phi_hat: 1.0,
            phi_used: 1.0,
            gof_p_value: 0.5,
            level: 0.95,
            n: 10,
            criterion: 0.0,
            boundary_contact: false,
            derived: Some(DerivedIntervals { r0: iv(r0), incubation: iv(5.0) }),
        };
        let reps = [rep("A", 2.0), rep("B", 3.0)];
        let t = r0_table(&reps).unwrap();
        assert_eq!(t.lines().collect::<Vec<_>>(), ["country,R0,lo,hi", "A,2,1.9,2.1", "B,3,2.9,3.1"]);
        assert_eq!(incubation_table(&reps).unwrap().lines().count(), 3);
        let mut bare = rep("C", 1.0);
        bare.derived = None;
        assert!(r0_table(&[bare]).is_err());
        let band = Band { x: vec![0.0, 1.0], fit: vec![1.0, 2.0], lower: vec![0.5, 1.5], upper: vec![1.5, 2.5], level: 0.95 };
        let t = bands_table(&reps, &[band.clone(), band]).unwrap();
        assert_eq!(t.lines().count(), 5);
        assert!(t.contains("B,1,2,1.5,2.5"));
    }
}
