//! Attribution reports: a TSV table and a self-contained HTML heatmap that
//! carry identical numbers.

use std::fmt::Write as _;

use crate::engine::{AttributionReport, Diagnostics};
use crate::error::{OsvError, Result};
use crate::interventions::OrderMode;

pub const TSV_HEADER: &str = "slot\ttoken\tphi_x\tphi_z\tstderr_x\tstderr_z";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    /// Slot index, or `a-b` for a merged range.
    pub slot: String,
    pub token: String,
    pub phi_x: f64,
    pub phi_z: f64,
    pub stderr_x: f64,
    pub stderr_z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportDocument {
    pub title: String,
    pub rows: Vec<ReportRow>,
    pub mode: OrderMode,
    pub diagnostics: Diagnostics,
}

impl ReportDocument {
    pub fn new(title: impl Into<String>, tokens: &[String], report: &AttributionReport) -> Result<Self> {
        if tokens.len() != report.len() {
            return Err(OsvError::Contract(format!(
                "{} tokens for a report over {} slots",
                tokens.len(),
                report.len()
            )));
        }
        let d = &report.diagnostics;
        let se = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let rows = tokens
            .iter()
            .enumerate()
            .map(|(i, token)| ReportRow {
                slot: i.to_string(),
                token: token.clone(),
                phi_x: report.occurrence_values[i],
                phi_z: report.order_values[i],
                stderr_x: se(&d.stderr_occurrence, i),
                stderr_z: se(&d.stderr_order, i),
            })
            .collect();
        Ok(Self {
            title: title.into(),
            rows,
            mode: report.mode,
            diagnostics: d.clone(),
        })
    }

    /// Sums attributions over each group. Merged standard errors are the
    /// sum of member errors, an upper bound for correlated estimates.
    pub fn merge_slots(&self, groups: &[SlotGroup]) -> Result<Self> {
        let n = self.rows.len();
        let mut owner = vec![None; n];
        for (g, group) in groups.iter().enumerate() {
            if group.end >= n || group.start > group.end {
                return Err(OsvError::Config(format!(
                    "slot group {}-{} outside 0..{n}",
                    group.start, group.end
                )));
            }
            for slot in owner.iter_mut().take(group.end + 1).skip(group.start) {
                if slot.replace(g).is_some() {
                    return Err(OsvError::Config("slot groups overlap".into()));
                }
            }
        }
        let mut rows = Vec::new();
        let mut i = 0;
        while i < n {
            match owner[i] {
                None => {
                    rows.push(self.rows[i].clone());
                    i += 1;
                }
                Some(g) => {
                    let SlotGroup { start, end } = groups[g];
                    let members = &self.rows[start..=end];
                    rows.push(ReportRow {
                        slot: format!("{start}-{end}"),
                        token: members.iter().map(|r| r.token.as_str()).collect::<Vec<_>>().join(" "),
                        phi_x: members.iter().map(|r| r.phi_x).sum(),
                        phi_z: members.iter().map(|r| r.phi_z).sum(),
                        stderr_x: members.iter().map(|r| r.stderr_x).sum(),
                        stderr_z: members.iter().map(|r| r.stderr_z).sum(),
                    });
                    i = end + 1;
                }
            }
        }
        Ok(Self { rows, ..self.clone() })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.slot,
                tsv_field(&r.token),
                r.phi_x,
                r.phi_z,
                r.stderr_x,
                r.stderr_z
            );
        }
        out
    }

    fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| [r.phi_x.abs(), r.phi_z.abs()])
            .fold(0.0, f64::max)
    }

    /// Green for positive, pink for negative; opacity is `|φ| / max |φ|`
    /// over the whole report.
    pub fn to_html(&self) -> String {
        let scale = self.max_abs();
        let cell = |v: f64| {
            let alpha = if scale > 0.0 { v.abs() / scale } else { 0.0 };
            let rgb = if v >= 0.0 { "0,160,60" } else { "230,40,140" };
            format!(
                "<td data-value=\"{v}\" style=\"background:rgba({rgb},{alpha:.3})\">{v}</td>"
            )
        };
        let mut out = String::new();
        let _ = write!(
            out,
            "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title>\n<style>\
body{{font-family:sans-serif}}table{{border-collapse:collapse}}\
td,th{{border:1px solid #ccc;padding:4px 8px;text-align:center;font-size:12px}}\
</style></head><body>\n<h1>{}</h1>\n",
            escape(&self.title),
            escape(&self.title)
        );
        let _ = writeln!(out, "<p>order mode: {}; max |phi|: {scale}</p>", self.mode.name());
        out.push_str("<table>\n<tr><th>slot</th>");
        for r in &self.rows {
            let _ = write!(out, "<th>{}</th>", escape(&r.slot));
        }
        out.push_str("</tr>\n<tr><th>token</th>");
        for r in &self.rows {
            let _ = write!(out, "<th>{}</th>", escape(&r.token));
        }
        out.push_str("</tr>\n<tr><th>phi_x</th>");
        for r in &self.rows {
            out.push_str(&cell(r.phi_x));
        }
        out.push_str("</tr>\n<tr><th>phi_z</th>");
        for r in &self.rows {
            out.push_str(&cell(r.phi_z));
        }
        out.push_str("</tr>\n</table>\n");
        let d = &self.diagnostics;
        let _ = writeln!(
            out,
            "<p>evaluations: {}; permutations: {}; converged: {}; exact: {}</p>",
            d.evaluation_count, d.permutations, d.converged, d.exact
        );
        out.push_str("</body></html>\n");
        out
    }
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n'], " ")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// An inclusive range of slots merged into one report row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotGroup {
    pub start: usize,
    pub end: usize,
}

/// Parses `a-b,c,d-e` into slot groups.
pub fn parse_slot_groups(spec: &str) -> Result<Vec<SlotGroup>> {
    let bad = || OsvError::Config(format!("bad slot groups {spec:?}; expected e.g. 0-1,3-4"));
    spec.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let part = part.trim();
            let (a, b) = part.split_once('-').unwrap_or((part, part));
            let start: usize = a.trim().parse().map_err(|_| bad())?;
            let end: usize = b.trim().parse().map_err(|_| bad())?;
            if start > end {
                return Err(bad());
            }
            Ok(SlotGroup { start, end })
        })
        .collect()
}

/// Extracts the numbers embedded in heatmap cells, row-major (`phi_x` row
/// first).
pub fn html_cell_values(html: &str) -> Vec<f64> {
    html.split("data-value=\"")
        .skip(1)
        .filter_map(|rest| rest.split('"').next()?.parse().ok())
        .collect()
}
