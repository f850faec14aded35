//! File formats: CSV tables with JSON sidecars and TOML study configs.

use super::predict::ExposureReport;
use super::study::{StudyConfig, StudyReport};
use crate::abc::{AbcCandidate, PosteriorSample, Provenance, Stage};
use crate::corrfuncs::{CorrelationModel, Family, ParamPoint};
use crate::error::{Error, Result};
use crate::margins::{GevFit, GevParams, MarginScale};
use crate::maxstable::{BlockMaximaPanel, Site, SpatialDesign};
use crate::mcle::CompositeFit;
use crate::summaries::{CurveSummary, SummaryMethod, TripletClustering, TripletSummary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Sidecar path of a CSV file: `panel.csv` becomes `panel.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Prefixes an I/O error with the file it concerns.
fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(at(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(at(path))?))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(at(path))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Schema(format!("{other:?}")),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Schema(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// Reads a headed CSV, checks the header and hands every data row to `row`
/// with its 1-based row number.
fn read_table<F>(path: &Path, expected: &[&str], mut row: F) -> Result<()>
where
    F: FnMut(usize, &csv::StringRecord) -> Result<()>,
{
    let file = File::open(path).map_err(at(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Schema(format!(
            "{}: expected header {}, found {}",
            path.display(),
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i + 1,
            message: e.to_string(),
        })?;
        row(i + 1, &record)?;
    }
    Ok(())
}

fn parse_f64(row: usize, field: &str, text: &str) -> Result<f64> {
    text.parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("{field}: '{text}' is not a number"),
    })
}

pub fn write_sites(path: &Path, design: &SpatialDesign) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["id", "x", "y"]).map_err(csv_err)?;
    for s in design.sites() {
        w.write_record([s.id.clone(), num(s.x), num(s.y)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sites(path: &Path) -> Result<SpatialDesign> {
    let mut sites = Vec::new();
    read_table(path, &["id", "x", "y"], |row, r| {
        sites.push(Site {
            id: r[0].to_string(),
            x: parse_f64(row, "x", &r[1])?,
            y: parse_f64(row, "y", &r[2])?,
        });
        Ok(())
    })?;
    SpatialDesign::new(sites)
}

/// Provenance of a panel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub scale: MarginScale,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: Option<CorrelationModel>,
    #[serde(default)]
    pub truncation_bound: Option<f64>,
    /// Free-form note, e.g. the file a transformed panel came from.
    #[serde(default)]
    pub source: Option<String>,
}

impl PanelMeta {
    pub fn new(scale: MarginScale) -> Self {
        Self {
            scale,
            seed: None,
            model: None,
            truncation_bound: None,
            source: None,
        }
    }
}

/// Writes the panel with one column per site id and the sidecar.
pub fn write_panel(path: &Path, panel: &BlockMaximaPanel, meta: &PanelMeta) -> Result<()> {
    if meta.scale != panel.scale() {
        return Err(Error::Scale {
            expected: panel.scale().to_string(),
            found: meta.scale.to_string(),
        });
    }
    let mut w = writer(path)?;
    w.write_record(panel.design().ids()).map_err(csv_err)?;
    for row in panel.rows() {
        w.write_record(row.iter().map(|&v| num(v)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    write_json(&meta_path(path), meta)
}

/// Reads a panel whose header must list the design's site ids in order. The
/// sidecar supplies the scale tag; without one the values are taken as raw.
pub fn read_panel(
    path: &Path,
    design: Arc<SpatialDesign>,
) -> Result<(BlockMaximaPanel, PanelMeta)> {
    let meta_file = meta_path(path);
    let meta = if meta_file.exists() {
        read_json(&meta_file)?
    } else {
        PanelMeta::new(MarginScale::Raw)
    };
    let ids: Vec<&str> = design.ids().collect();
    let mut values = Vec::new();
    read_table(path, &ids, |row, r| {
        for (id, cell) in ids.iter().zip(r.iter()) {
            values.push(parse_f64(row, id, cell)?);
        }
        Ok(())
    })?;
    let panel = BlockMaximaPanel::new(values, meta.scale, design)?;
    Ok((panel, meta))
}

pub fn write_gev_fits(path: &Path, design: &SpatialDesign, fits: &[GevFit]) -> Result<()> {
    if fits.len() != design.len() {
        return Err(Error::Dimension(format!(
            "{} fits for {} sites",
            fits.len(),
            design.len()
        )));
    }
    let mut w = writer(path)?;
    w.write_record(["site_id", "mu", "sigma", "xi", "se_mu", "se_sigma", "se_xi"])
        .map_err(csv_err)?;
    for (id, f) in design.ids().zip(fits) {
        let p = f.params;
        w.write_record([
            id.to_string(),
            num(p.mu),
            num(p.sigma),
            num(p.xi),
            num(f.se[0]),
            num(f.se[1]),
            num(f.se[2]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads per-site keyed rows and orders them by the design's site ids.
fn by_site<T>(
    path: &Path,
    design: &SpatialDesign,
    mut found: HashMap<String, T>,
) -> Result<Vec<T>> {
    let out = design
        .ids()
        .map(|id| {
            found
                .remove(id)
                .ok_or_else(|| Error::Schema(format!("{}: no row for site '{id}'", path.display())))
        })
        .collect::<Result<Vec<T>>>()?;
    if let Some(extra) = found.keys().next() {
        return Err(Error::Schema(format!(
            "{}: site '{extra}' is not in the design",
            path.display()
        )));
    }
    Ok(out)
}

/// GEV parameters per site, in design order.
pub fn read_gev_fits(path: &Path, design: &SpatialDesign) -> Result<Vec<GevParams>> {
    let mut found = HashMap::new();
    read_table(
        path,
        &["site_id", "mu", "sigma", "xi", "se_mu", "se_sigma", "se_xi"],
        |row, r| {
            let p = GevParams::new(
                parse_f64(row, "mu", &r[1])?,
                parse_f64(row, "sigma", &r[2])?,
                parse_f64(row, "xi", &r[3])?,
            )
            .map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
            if found.insert(r[0].to_string(), p).is_some() {
                return Err(Error::Schema(format!("duplicated site id '{}'", &r[0])));
            }
            Ok(())
        },
    )?;
    by_site(path, design, found)
}

/// Exposure weights from a CSV `id,weight`, in design order.
pub fn read_weights(path: &Path, design: &SpatialDesign) -> Result<Vec<f64>> {
    let mut found = HashMap::new();
    read_table(path, &["id", "weight"], |row, r| {
        let w = parse_f64(row, "weight", &r[1])?;
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("weight {w} is not a finite nonnegative number"),
            });
        }
        if found.insert(r[0].to_string(), w).is_some() {
            return Err(Error::Schema(format!("duplicated site id '{}'", &r[0])));
        }
        Ok(())
    })?;
    by_site(path, design, found)
}

/// Triplet membership with site ids in place of indices.
pub fn write_clustering(
    path: &Path,
    design: &SpatialDesign,
    clustering: &TripletClustering,
) -> Result<()> {
    if !clustering.matches(design) {
        return Err(Error::Design(
            "clustering was built for another design".into(),
        ));
    }
    let sites = design.sites();
    let mut w = writer(path)?;
    w.write_record(["triplet_j", "triplet_k", "triplet_l", "cluster_id"])
        .map_err(csv_err)?;
    for (t, c) in clustering.triplets().iter().zip(clustering.cluster_of()) {
        w.write_record([
            &sites[t[0]].id,
            &sites[t[1]].id,
            &sites[t[2]].id,
            &c.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_triplet_summary(path: &Path, summary: &TripletSummary) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["cluster_id", "theta_bar", "count"])
        .map_err(csv_err)?;
    for (i, (t, c)) in summary.theta_bar.iter().zip(&summary.counts).enumerate() {
        w.write_record([(i + 1).to_string(), num(*t), c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// The fitted curve on its grid, plus a sidecar with the fitted parameters.
pub fn write_curve(path: &Path, summary: &CurveSummary) -> Result<()> {
    let mut w = writer(path)?;
    let column = match summary.method {
        SummaryMethod::Madogram => "log_theta",
        _ => "theta",
    };
    w.write_record(["h", column]).map_err(csv_err)?;
    for (h, v) in summary.grid.points().into_iter().zip(&summary.values) {
        w.write_record([num(h), num(*v)]).map_err(csv_err)?;
    }
    w.flush()?;
    write_json(
        &meta_path(path),
        &serde_json::json!({
            "method": summary.method,
            "family": summary.family,
            "c2": summary.phi.c2,
            "nu": summary.phi.nu,
            "h_max": summary.grid.h_max,
        }),
    )
}

/// Run metadata stored next to a posterior CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMeta {
    pub seed: u64,
    pub iterations: usize,
    pub percentile: f64,
    pub epsilon: f64,
    pub method: SummaryMethod,
    pub family: Family,
    pub stage: Stage,
    pub wall_time_secs: f64,
    pub provenance: Provenance,
}

pub fn write_posterior(path: &Path, sample: &PosteriorSample, wall_time_secs: f64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["c2", "nu", "distance", "weight"])
        .map_err(csv_err)?;
    for p in &sample.particles {
        w.write_record([num(p.phi.c2), num(p.phi.nu), num(p.distance), num(p.weight)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    let prov = &sample.provenance;
    let meta = PosteriorMeta {
        seed: prov.seed,
        iterations: prov.iterations,
        percentile: sample.percentile,
        epsilon: sample.epsilon,
        method: prov.method,
        family: prov.family,
        stage: sample.stage,
        wall_time_secs,
        provenance: prov.clone(),
    };
    write_json(&meta_path(path), &meta)
}

/// Reads a posterior CSV and its sidecar.
pub fn read_posterior(path: &Path) -> Result<PosteriorSample> {
    let meta_file = meta_path(path);
    if !meta_file.exists() {
        return Err(Error::Schema(format!(
            "missing posterior metadata {}",
            meta_file.display()
        )));
    }
    let meta: PosteriorMeta = read_json(&meta_file)?;
    let mut particles = Vec::new();
    read_table(path, &["c2", "nu", "distance", "weight"], |row, r| {
        let phi = ParamPoint::new(parse_f64(row, "c2", &r[0])?, parse_f64(row, "nu", &r[1])?);
        let weight = parse_f64(row, "weight", &r[3])?;
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("weight {weight} is not a finite nonnegative number"),
            });
        }
        particles.push(AbcCandidate {
            phi,
            distance: parse_f64(row, "distance", &r[2])?,
            weight,
            iteration: row - 1,
        });
        Ok(())
    })?;
    if particles.is_empty() {
        return Err(Error::EmptySample(format!(
            "{} has no particles",
            path.display()
        )));
    }
    Ok(PosteriorSample {
        particles,
        epsilon: meta.epsilon,
        percentile: meta.percentile,
        stage: meta.stage,
        provenance: meta.provenance,
    })
}

pub fn write_mcle(path: &Path, fit: &CompositeFit) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["c2", "nu", "loglik", "converged"])
        .map_err(csv_err)?;
    w.write_record([
        num(fit.phi_hat.c2),
        num(fit.phi_hat.nu),
        num(fit.loglik),
        fit.converged.to_string(),
    ])
    .map_err(csv_err)?;
    w.flush()?;
    write_json(
        &meta_path(path),
        &serde_json::json!({ "at_boundary": fit.at_boundary, "starts": fit.starts }),
    )
}

/// The fit row of an mcle CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McleRecord {
    pub phi: ParamPoint,
    pub loglik: f64,
    pub converged: bool,
}

pub fn read_mcle(path: &Path) -> Result<McleRecord> {
    let mut rows = Vec::new();
    read_table(path, &["c2", "nu", "loglik", "converged"], |row, r| {
        let converged = r[3].parse::<bool>().map_err(|_| Error::Parse {
            row,
            message: format!("converged: '{}' is not a boolean", &r[3]),
        })?;
        rows.push(McleRecord {
            phi: ParamPoint::new(parse_f64(row, "c2", &r[0])?, parse_f64(row, "nu", &r[1])?),
            loglik: parse_f64(row, "loglik", &r[2])?,
            converged,
        });
        Ok(())
    })?;
    match rows.as_slice() {
        [one] => Ok(*one),
        _ => Err(Error::Schema(format!(
            "{}: expected one fit row, found {}",
            path.display(),
            rows.len()
        ))),
    }
}

/// Parses and validates a study config.
pub fn load_config(path: &Path) -> Result<StudyConfig> {
    let text = read_text(path)?;
    let config: StudyConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes `runs.csv`, `summary.csv` and `report.json` into `dir`.
pub fn write_study_report(dir: &Path, report: &StudyReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = writer(&dir.join("runs.csv"))?;
    w.write_record([
        "model",
        "replicate",
        "estimator",
        "mse",
        "h_star",
        "truncated",
        "band_coverage",
        "c2",
        "nu",
        "epsilon",
        "converged",
        "error",
    ])
    .map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.model.clone(),
            r.replicate.to_string(),
            r.estimator.clone(),
            opt(r.mse),
            num(r.h_star),
            r.truncated.to_string(),
            opt(r.band_coverage),
            opt(r.c2),
            opt(r.nu),
            opt(r.epsilon),
            r.converged.map(|c| c.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    let mut w = writer(&dir.join("summary.csv"))?;
    w.write_record([
        "model",
        "estimator",
        "runs",
        "failures",
        "mean_mse",
        "se_mse",
        "mean_band_coverage",
    ])
    .map_err(csv_err)?;
    for s in &report.summaries {
        w.write_record([
            s.model.clone(),
            s.estimator.clone(),
            s.runs.to_string(),
            s.failures.to_string(),
            opt(s.mean_mse),
            opt(s.se_mse),
            opt(s.mean_band_coverage),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    write_json(&dir.join("report.json"), report)
}

/// Writes the per-simulation totals to `path` and the per-threshold
/// summary to its sidecar.
pub fn write_exposure(path: &Path, report: &ExposureReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["threshold", "simulation", "total", "count"])
        .map_err(csv_err)?;
    for (t, &threshold) in report.thresholds.iter().enumerate() {
        for s in 0..report.n_sims {
            w.write_record([
                num(threshold),
                s.to_string(),
                num(report.totals[t][s]),
                report.counts[t][s].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    write_json(
        &meta_path(path),
        &serde_json::json!({
            "n_sims": report.n_sims,
            "minima": report.minima,
            "total_weight": report.total_weight,
            "inversion_failures": report.inversion_failures,
            "summaries": report.summaries,
        }),
    )
}
