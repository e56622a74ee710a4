//! Data series behind the key-rate figures, at desk-scale grids.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bounds::{self, PipelineOptions, PointResult};
use crate::protocol::{self, baseline, BypassParams, Scenario, SpNoiseModel, WcpModel};

use super::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureName {
    /// Matched single photons: numerical rate against both closed forms.
    Fig3,
    /// Detector mismatch with `eta_T = eta_AE`.
    Fig4,
    /// Detector mismatch minimised over `eta_T`.
    Fig5,
    /// WCP with `eta_T = 1`, `W = 0`, for several mean photon numbers.
    Fig6,
    /// WCP minimised over `eta_T` at `W = 0` and `W = 1e-5`, with the minimising `eta_T`.
    Fig7,
}

impl FigureName {
    pub const ALL: [FigureName; 5] = [Self::Fig3, Self::Fig4, Self::Fig5, Self::Fig6, Self::Fig7];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Fig7 => "fig7",
        }
    }
}

impl FromStr for FigureName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| CliError::UnknownFigure(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureOptions {
    /// `f_eps` depolarisation for the single-photon figures.
    pub sp_epsilon: f64,
    pub wcp_epsilon: f64,
    /// Frank-Wolfe iteration cap for WCP points with `W > 0`.
    pub wcp_relaxed_max_iter: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self { sp_epsilon: 1e-10, wcp_epsilon: 1e-11, wcp_relaxed_max_iter: 40 }
    }
}

/// A plotted curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Tabular figure data: one `series` label per row followed by numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub name: FigureName,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub columns: Vec<String>,
    pub series: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub curves: Vec<Curve>,
}

impl FigureData {
    fn new(name: FigureName, title: &str, x_label: &str, y_label: &str, columns: &[&str]) -> Self {
        Self {
            name,
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            series: Vec::new(),
            rows: Vec::new(),
            curves: Vec::new(),
        }
    }

    fn push(&mut self, series: &str, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.series.push(series.to_string());
        self.rows.push(row);
    }

    /// Curve through `(x, y)` columns of the rows of one series.
    fn curve(&mut self, label: &str, series: &str, x: usize, y: usize) {
        let points = self
            .series
            .iter()
            .zip(&self.rows)
            .filter(|(s, r)| *s == series && r[y].is_finite())
            .map(|(_, r)| (r[x], r[y]))
            .collect();
        self.curves.push(Curve { label: label.into(), points });
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of column `name` over the rows of `series`.
    pub fn values(&self, series: &str, name: &str) -> Vec<f64> {
        let Some(c) = self.column(name) else { return Vec::new() };
        self.series.iter().zip(&self.rows).filter(|(s, _)| *s == series).map(|(_, r)| r[c]).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["series".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (s, r) in self.series.iter().zip(&self.rows) {
            let mut rec = vec![s.clone()];
            rec.extend(r.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rate_of(p: &PointResult) -> f64 {
    match p.rate {
        Some(r) if p.status.has_rate() => r.raw_key_rate,
        _ => f64::NAN,
    }
}

/// Smallest certified rate over a grid and the `eta_T` attaining it (NaN when nothing is feasible).
fn minimise<F>(build: F, eta_ae: f64, grid: &[f64], opts: &PipelineOptions) -> Result<(f64, f64)>
where
    F: Fn(BypassParams) -> bounds::Result<Scenario> + Sync,
{
    let scan = bounds::scan_eta_t(build, eta_ae, grid, opts)?;
    Ok((scan.min_rate().unwrap_or(f64::NAN), scan.argmin_eta_t().unwrap_or(f64::NAN)))
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).map(|v| (v * 1e6).round() / 1e6).collect()
}

pub fn figure(name: FigureName, fo: &FigureOptions) -> Result<FigureData> {
    match name {
        FigureName::Fig3 => fig3(fo),
        FigureName::Fig4 => fig4(fo),
        FigureName::Fig5 => fig5(fo),
        FigureName::Fig6 => fig6(fo),
        FigureName::Fig7 => fig7(fo),
    }
}

fn sp_opts(fo: &FigureOptions) -> PipelineOptions {
    PipelineOptions { epsilon: Some(fo.sp_epsilon), ..Default::default() }
}

fn fig3(fo: &FigureOptions) -> Result<FigureData> {
    let model = SpNoiseModel::table_one();
    let (q, e) = protocol::sp_statistics(&model, protocol::QberFormula::Corrected)?;
    let opts = sp_opts(fo);
    let eta_t = bounds::default_grid(10);
    let mut fig = FigureData::new(
        FigureName::Fig3,
        "Single-photon BB84, matched detectors",
        "eta_AE",
        "key rate",
        &["eta_ae", "argmin_eta_t", "numerical", "sp_normal", "ext_bp_sp"],
    );
    for eta_ae in bounds::default_grid(10) {
        let (r, t) = minimise(|b| Ok(Scenario::sp_matched(&model, b)?), eta_ae, &eta_t, &opts)?;
        let normal = baseline::sp_normal(model.p_z, q, e);
        let ext = baseline::ext_bp_sp(model.p_z, q, e, eta_ae);
        fig.push("sp", vec![eta_ae, t, r, normal, ext]);
    }
    fig.curve("this work", "sp", 0, 2);
    fig.curve("normal QKD", "sp", 0, 3);
    fig.curve("bypass closed form", "sp", 0, 4);
    Ok(fig)
}

fn mismatch_point(q: f64, eta_1: f64, eta_ae: f64, eta_t: f64, opts: &PipelineOptions) -> Result<f64> {
    let model = SpNoiseModel::mismatched(q, eta_1, 1.0, 0.5);
    let s = Scenario::sp_mismatch(&model, BypassParams::new(eta_ae, eta_t)?)?;
    Ok(rate_of(&bounds::evaluate(&s, opts)))
}

fn fig4(fo: &FigureOptions) -> Result<FigureData> {
    let opts = sp_opts(fo);
    let mut fig = FigureData::new(
        FigureName::Fig4,
        "Detector mismatch, eta_T = eta_AE",
        "eta_AE (a) / q (b)",
        "key rate",
        &["eta_1", "q", "eta_ae", "eta_t", "numerical", "tilted"],
    );
    let eta_ae = grid(0.2, 1.0, 5);
    let mut jobs: Vec<(String, f64, f64, f64)> = Vec::new();
    for eta_1 in [0.1, 0.3, 0.5] {
        for &a in &eta_ae {
            jobs.push((format!("a:eta_1={eta_1}"), eta_1, 0.1, a));
        }
    }
    for a in [1.0, 0.5] {
        for q in grid(0.0, 0.1, 6) {
            jobs.push((format!("b:eta_ae={a}"), 0.078, q, a));
        }
    }
    let rates: Vec<Result<f64>> = jobs.par_iter().map(|(_, e1, q, a)| mismatch_point(*q, *e1, *a, *a, &opts)).collect();
    for ((series, eta_1, q, a), r) in jobs.iter().zip(rates) {
        let tilted = baseline::tilted_rate(*eta_1, 1.0, 0.5);
        fig.push(series, vec![*eta_1, *q, *a, *a, r?, tilted]);
    }
    for eta_1 in [0.1, 0.3, 0.5] {
        let s = format!("a:eta_1={eta_1}");
        fig.curve(&s.clone(), &s, 2, 4);
    }
    for a in [1.0, 0.5] {
        let s = format!("b:eta_ae={a}");
        fig.curve(&s.clone(), &s, 1, 4);
    }
    Ok(fig)
}

fn fig5(fo: &FigureOptions) -> Result<FigureData> {
    let opts = sp_opts(fo);
    let (q, eta_1) = (0.1, 0.09);
    let model = SpNoiseModel::mismatched(q, eta_1, 1.0, 0.5);
    let build = |b: BypassParams| -> bounds::Result<Scenario> { Ok(Scenario::sp_mismatch(&model, b)?) };
    let mut fig = FigureData::new(
        FigureName::Fig5,
        "Detector mismatch minimised over eta_T",
        "eta_AE (a) / eta_T (b)",
        "key rate",
        &["eta_ae", "eta_t", "numerical", "normal"],
    );
    let normal = mismatch_point(q, eta_1, 1.0, 1.0, &opts)?;
    let eta_t = bounds::default_grid(10);
    for eta_ae in grid(0.3, 1.0, 8) {
        let (r, t) = minimise(build, eta_ae, &eta_t, &opts)?;
        fig.push("a:min", vec![eta_ae, t, r, normal]);
    }
    let scan = bounds::scan_eta_t(build, 0.5, &eta_t, &opts)?;
    for p in &scan.points {
        fig.push("b:eta_ae=0.5", vec![0.5, p.bypass.eta_t, rate_of(p), normal]);
    }
    fig.curve("minimised over eta_T", "a:min", 0, 2);
    fig.curve("normal QKD", "a:min", 0, 3);
    fig.curve("eta_AE = 0.5", "b:eta_ae=0.5", 1, 2);
    Ok(fig)
}

fn wcp_opts(fo: &FigureOptions, weight: f64) -> PipelineOptions {
    let mut opts = PipelineOptions { epsilon: Some(fo.wcp_epsilon), ..Default::default() };
    if weight > 0.0 {
        opts.fw.max_iter = fo.wcp_relaxed_max_iter;
    }
    opts
}

fn fig6(fo: &FigureOptions) -> Result<FigureData> {
    let q = 0.02;
    let opts = wcp_opts(fo, 0.0);
    let mut fig = FigureData::new(
        FigureName::Fig6,
        "WCP BB84, eta_T = 1, W = 0",
        "eta_AE",
        "key rate",
        &["mu", "eta_ae", "numerical", "ext_bp"],
    );
    let mus = [0.5, 0.8, 1.1];
    let eta_ae = grid(0.8, 1.0, 6);
    let mut jobs = Vec::new();
    for &mu in &mus {
        for &a in &eta_ae {
            jobs.push((mu, a));
        }
    }
    let rates: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(mu, a)| {
            let s = Scenario::wcp(&WcpModel::new(mu, q, 0.5), BypassParams::new(a, 1.0)?, 0.0)?;
            Ok(rate_of(&bounds::evaluate(&s, &opts)))
        })
        .collect();
    for (&(mu, a), r) in jobs.iter().zip(rates) {
        let stats = protocol::wcp_statistics(&WcpModel::new(mu, q, 0.5))?;
        let ext = baseline::ext_bp_wcp(0.5, stats.q_mu, stats.e_z, mu, a);
        fig.push(&format!("mu={mu}"), vec![mu, a, r?, ext]);
    }
    for mu in mus {
        let s = format!("mu={mu}");
        fig.curve(&s.clone(), &s, 1, 2);
    }
    Ok(fig)
}

fn fig7(fo: &FigureOptions) -> Result<FigureData> {
    let model = WcpModel::new(0.8, 0.02, 0.5);
    let mut fig = FigureData::new(
        FigureName::Fig7,
        "WCP BB84 minimised over eta_T (mu = 0.8)",
        "eta_AE",
        "key rate",
        &["W", "eta_ae", "argmin_eta_t", "numerical"],
    );
    let eta_t = grid(0.5, 1.0, 6);
    for w in [0.0, 1e-5] {
        let opts = wcp_opts(fo, w);
        for eta_ae in grid(0.8, 1.0, 5) {
            let (r, t) = minimise(|b| Ok(Scenario::wcp(&model, b, w)?), eta_ae, &eta_t, &opts)?;
            fig.push(&format!("W={w}"), vec![w, eta_ae, t, r]);
        }
    }
    fig.curve("W = 0", "W=0", 1, 3);
    fig.curve("W = 1e-5", "W=0.00001", 1, 3);
    Ok(fig)
}
