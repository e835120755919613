//! Static bullet-plot reports for a guidance plan.
//!
//! Each condition of the G3/G4 rules becomes one row: the axis spans the
//! feature's training range, green marks the values associated with clean
//! files, red the values associated with defects, a bar marks the file's
//! actual value and an arrow shows which way to move.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureRange, Label, MetricSchema};
use crate::guidance::{GuidancePlan, GuidanceType, StatementKind};
use crate::miner::{Condition, ConditionForm};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("plan for `{0}` has no rules")]
    EmptyPlan(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ReportError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrow {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shade {
    Green,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub from: f64,
    pub to: f64,
    pub shade: Shade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulletRow {
    pub guidance: GuidanceType,
    pub feature: String,
    pub condition: Condition,
    pub actual: f64,
    pub axis_min: f64,
    pub axis_max: f64,
    pub bands: Vec<Band>,
    /// `None` when the actual value needs no change.
    pub arrow: Option<Arrow>,
}

impl BulletRow {
    /// Horizontal position of `v` on a track of `width` pixels.
    pub fn position(&self, v: f64, width: f64) -> f64 {
        (v - self.axis_min) / (self.axis_max - self.axis_min) * width
    }
}

fn condition_region(c: &Condition, lo: f64, hi: f64) -> (f64, f64) {
    match c.form {
        ConditionForm::Le(v) => (lo, v),
        ConditionForm::Gt(v) => (v, hi),
        ConditionForm::Between(a, b) => (a, b),
    }
}

/// Rows for every condition of the plan's G3 and G4 rules.
pub fn bullet_rows(plan: &GuidancePlan, schema: &MetricSchema, train_range: &FeatureRange) -> Result<Vec<BulletRow>> {
    let mut rows = Vec::new();
    for t in [GuidanceType::HypContradicting, GuidanceType::HypSupporting] {
        let Some(slot) = plan.slot(t) else { continue };
        for c in &slot.rule.antecedent {
            let i = schema.index_of(&c.feature).ok_or_else(|| ReportError::UnknownFeature(c.feature.clone()))?;
            let actual =
                *plan.feature_values.get(&c.feature).ok_or_else(|| ReportError::UnknownFeature(c.feature.clone()))?;
            let mut lo = train_range.min[i].min(actual);
            let mut hi = train_range.max[i].max(actual);
            for b in c.bounds() {
                lo = lo.min(b);
                hi = hi.max(b);
            }
            if hi <= lo {
                hi = lo + 1.0;
            }
            let (inside, outside) = match t {
                GuidanceType::HypContradicting => (Shade::Green, Shade::Red),
                _ => (Shade::Red, Shade::Green),
            };
            let (a, b) = condition_region(c, lo, hi);
            let mut bands = Vec::new();
            if a > lo {
                bands.push(Band { from: lo, to: a, shade: outside });
            }
            bands.push(Band { from: a, to: b, shade: inside });
            if b < hi {
                bands.push(Band { from: b, to: hi, shade: outside });
            }
            let arrow = if c.holds(actual) {
                None
            } else {
                let towards = if actual < a { Arrow::Right } else { Arrow::Left };
                Some(match (t, towards) {
                    (GuidanceType::HypContradicting, d) => d,
                    (_, Arrow::Right) => Arrow::Left,
                    (_, Arrow::Left) => Arrow::Right,
                })
            };
            rows.push(BulletRow {
                guidance: t,
                feature: c.feature.clone(),
                condition: c.clone(),
                actual,
                axis_min: lo,
                axis_max: hi,
                bands,
                arrow,
            });
        }
    }
    Ok(rows)
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn headline(plan: &GuidancePlan) -> String {
    let class = match plan.prediction {
        Label::Defect => "defective",
        Label::Clean => "clean",
    };
    format!("{class}, {:.0}%", plan.probability * 100.0)
}

const WIDTH: f64 = 760.0;
const LABEL_W: f64 = 230.0;
const TRACK_W: f64 = 480.0;
const ROW_H: f64 = 46.0;
const TOP: f64 = 54.0;

pub fn render_svg(plan: &GuidancePlan, rows: &[BulletRow]) -> String {
    let height = TOP + ROW_H * rows.len().max(1) as f64 + 16.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"##
    );
    let _ = writeln!(
        s,
        r##"<text x="8" y="20" font-size="15" font-weight="bold" data-prediction="{}" data-probability="{}">{} ({})</text>"##,
        plan.prediction,
        plan.probability,
        escape(&plan.instance_id),
        escape(&headline(plan))
    );
    if rows.is_empty() {
        let _ = writeln!(s, r##"<text x="8" y="{}">No follow or avoid guidance for this file.</text>"##, TOP + 14.0);
    }
    for (r, row) in rows.iter().enumerate() {
        let y = TOP + ROW_H * r as f64;
        let _ = writeln!(
            s,
            r##"<g class="bullet" data-guidance="{}" data-feature="{}" data-actual="{}" data-axis-min="{}" data-axis-max="{}">"##,
            row.guidance.code(),
            escape(&row.feature),
            row.actual,
            row.axis_min,
            row.axis_max
        );
        let _ = writeln!(
            s,
            r##"<text x="8" y="{}">{} {}</text>"##,
            y + 16.0,
            row.guidance.code(),
            escape(&row.condition.to_string())
        );
        for band in &row.bands {
            let x0 = LABEL_W + row.position(band.from, TRACK_W);
            let x1 = LABEL_W + row.position(band.to, TRACK_W);
            let fill = match band.shade {
                Shade::Green => "#8fd19e",
                Shade::Red => "#f1a1a1",
            };
            let _ = writeln!(
                s,
                r##"<rect class="band" x="{x0:.3}" y="{}" width="{:.3}" height="14" fill="{fill}" data-shade="{}" data-from="{}" data-to="{}"/>"##,
                y + 4.0,
                (x1 - x0).max(0.0),
                match band.shade {
                    Shade::Green => "green",
                    Shade::Red => "red",
                },
                band.from,
                band.to
            );
        }
        let xa = LABEL_W + row.position(row.actual, TRACK_W);
        let _ = writeln!(
            s,
            r##"<line class="actual" x1="{xa:.3}" x2="{xa:.3}" y1="{}" y2="{}" stroke="#222" stroke-width="3" data-value="{}"/>"##,
            y,
            y + 22.0,
            row.actual
        );
        if let Some(arrow) = row.arrow {
            let (tip, tail) = match arrow {
                Arrow::Right => (xa + 26.0, xa + 4.0),
                Arrow::Left => (xa - 26.0, xa - 4.0),
            };
            let back = if tip > tail { tip - 6.0 } else { tip + 6.0 };
            let ay = y + 29.0;
            let _ = writeln!(
                s,
                r##"<path class="arrow" data-direction="{}" d="M{tail:.3},{ay} L{tip:.3},{ay} M{back:.3},{} L{tip:.3},{ay} L{back:.3},{}" stroke="#222" fill="none"/>"##,
                match arrow {
                    Arrow::Right => "right",
                    Arrow::Left => "left",
                },
                ay - 4.0,
                ay + 4.0
            );
        }
        let _ = writeln!(
            s,
            r##"<text x="{LABEL_W}" y="{}" fill="#555">{}</text><text x="{}" y="{}" fill="#555" text-anchor="end">{}</text>"##,
            y + 40.0,
            row.axis_min,
            LABEL_W + TRACK_W,
            y + 40.0,
            row.axis_max
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_html(plan: &GuidancePlan, rows: &[BulletRow]) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">");
    let _ = writeln!(h, "<title>{}</title>\n</head>\n<body>", escape(&plan.instance_id));
    let _ =
        writeln!(h, "<h1>{}</h1>\n<p class=\"prediction\">{}</p>", escape(&plan.instance_id), escape(&headline(plan)));
    let list = |h: &mut String, title: &str, kind: StatementKind| {
        let items: Vec<_> = plan.statements.iter().filter(|s| s.kind == kind).collect();
        if items.is_empty() {
            return;
        }
        let _ = writeln!(h, "<h2>{title}</h2>\n<ul>");
        for st in items {
            let _ = writeln!(h, "<li data-guidance=\"{}\">{}</li>", st.guidance.code(), escape(&st.text));
        }
        h.push_str("</ul>\n");
    };
    list(&mut h, "What to do", StatementKind::Do);
    list(&mut h, "What to avoid", StatementKind::Avoid);
    let current: Vec<_> =
        plan.filled().filter(|(t, _)| matches!(t, GuidanceType::Supporting | GuidanceType::Contradicting)).collect();
    if !current.is_empty() {
        h.push_str("<h2>Current practices</h2>\n<ul>\n");
        for (t, slot) in current {
            let _ = writeln!(
                h,
                "<li data-guidance=\"{}\">{}: {}</li>",
                t.code(),
                t.describe(),
                escape(&slot.rule.to_string())
            );
        }
        h.push_str("</ul>\n");
    }
    if !rows.is_empty() {
        h.push_str(&render_svg(plan, rows));
    }
    h.push_str("</body>\n</html>\n");
    h
}

/// File stem safe for any file id.
pub fn artifact_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

/// Writes `<stem>.svg` and `<stem>.html` into `out_dir`.
pub fn emit_bullet_report(
    plan: &GuidancePlan,
    schema: &MetricSchema,
    train_range: &FeatureRange,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    if plan.empty {
        return Err(ReportError::EmptyPlan(plan.instance_id.clone()));
    }
    let rows = bullet_rows(plan, schema, train_range)?;
    fs::create_dir_all(out_dir)?;
    let stem = artifact_stem(&plan.instance_id);
    let svg = out_dir.join(format!("{stem}.svg"));
    let html = out_dir.join(format!("{stem}.html"));
    fs::write(&svg, render_svg(plan, &rows))?;
    fs::write(&html, render_html(plan, &rows))?;
    Ok((svg, html))
}
