use serde::{Deserialize, Serialize};

use super::{run_benchmark, EvalError, Manifest, PartIoUReport};
use crate::geodesic::Reweighting;
use crate::pipeline::PipelineConfig;
use crate::render::ViewSampling;

/// View counts of the standard view-count ablation.
pub const N_VIEWS_GRID: [usize; 6] = [5, 10, 15, 20, 30, 40];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NViews(Vec<usize>),
    Sampling(Vec<ViewSampling>),
    Reweighting(Vec<Reweighting>),
    Smoothing(Vec<bool>),
    Color(Vec<[u8; 3]>),
}

/// `rrggbb` hex, with or without a leading `#`.
pub fn parse_color(s: &str) -> Result<[u8; 3], String> {
    let hex = s.trim_start_matches('#');
    if hex.len() != 6 {
        return Err(format!("color {s:?} is not rrggbb hex"));
    }
    let mut out = [0u8; 3];
    for (i, c) in out.iter_mut().enumerate() {
        *c = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|e| format!("color {s:?}: {e}"))?;
    }
    Ok(out)
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(format!("expected on/off, got {other:?}")),
    }
}

fn parse_list<T>(values: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let out: Vec<T> = values.split(',').map(|v| f(v.trim())).collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err("axis needs at least one value".into());
    }
    Ok(out)
}

/// `name=v1,v2,...`, or a bare `n_views` for the standard grid.
impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, values) = match s.split_once('=') {
            Some((n, v)) => (n.trim(), Some(v)),
            None => (s.trim(), None),
        };
        let values = match (name, values) {
            ("n_views", None) => return Ok(SweepAxis::NViews(N_VIEWS_GRID.to_vec())),
            (_, Some(v)) if !v.trim().is_empty() => v,
            _ => return Err(format!("axis {name:?} needs values, e.g. {name}=a,b")),
        };
        Ok(match name {
            "n_views" => SweepAxis::NViews(parse_list(values, |v| {
                match v.parse::<usize>() {
                    Ok(n) if n > 0 => Ok(n),
                    _ => Err(format!("bad view count {v:?}")),
                }
            })?),
            "sampling" => SweepAxis::Sampling(parse_list(values, str::parse)?),
            "reweighting" => SweepAxis::Reweighting(parse_list(values, str::parse)?),
            "smoothing" => SweepAxis::Smoothing(parse_list(values, parse_switch)?),
            "color" => SweepAxis::Color(parse_list(values, parse_color)?),
            other => return Err(format!("unknown sweep axis {other:?}")),
        })
    }
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::NViews(_) => "n_views",
            SweepAxis::Sampling(_) => "sampling",
            SweepAxis::Reweighting(_) => "reweighting",
            SweepAxis::Smoothing(_) => "smoothing",
            SweepAxis::Color(_) => "color",
        }
    }

    /// One config per setting; everything else, seeds included, is `base`.
    pub fn configs(&self, base: &PipelineConfig) -> Vec<(String, PipelineConfig)> {
        fn each<T: Copy>(
            values: &[T],
            base: &PipelineConfig,
            label: impl Fn(T) -> String,
            set: impl Fn(&mut PipelineConfig, T),
        ) -> Vec<(String, PipelineConfig)> {
            values
                .iter()
                .map(|&v| {
                    let mut c = base.clone();
                    set(&mut c, v);
                    (label(v), c)
                })
                .collect()
        }
        match self {
            SweepAxis::NViews(v) => each(v, base, |n| n.to_string(), |c, n| c.n_views = n),
            SweepAxis::Sampling(v) => each(v, base, |s| format!("{s:?}").to_lowercase(), |c, s| c.sampling = s),
            SweepAxis::Reweighting(v) => each(v, base, |r| format!("{r:?}").to_lowercase(), |c, r| c.reweighting = r),
            SweepAxis::Smoothing(v) => each(
                v,
                base,
                |b| if b { "on".into() } else { "off".into() },
                |c, b| c.smoothing = b,
            ),
            SweepAxis::Color(v) => each(
                v,
                base,
                |[r, g, b]| format!("{r:02x}{g:02x}{b:02x}"),
                |c, col| c.color = col,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub report: PartIoUReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Setting, overall mIoU, then one column per part.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let err = |e: csv::Error| EvalError::Report(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.axis.clone(), "miou".into()];
        if let Some(first) = self.rows.first() {
            header.extend(first.report.parts.iter().map(|p| p.prompt.clone()));
        }
        w.write_record(&header).map_err(err)?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let mut rec = vec![row.setting.clone(), fmt(row.report.overall)];
            rec.extend(row.report.parts.iter().map(|p| fmt(p.iou)));
            w.write_record(&rec).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// One benchmark run per axis value.
pub fn ablation_sweep(manifest: &Manifest, base: &PipelineConfig, axis: &SweepAxis) -> Result<SweepTable, EvalError> {
    let rows = axis
        .configs(base)
        .into_iter()
        .map(|(setting, cfg)| {
            Ok(SweepRow {
                setting,
                report: run_benchmark(manifest, &cfg)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(SweepTable {
        axis: axis.name().into(),
        rows,
    })
}
