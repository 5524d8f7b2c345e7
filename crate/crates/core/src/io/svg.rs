//! Two-panel SVG heatmaps: log risk ratio on top, direction classification
//! below. `beta` runs along the horizontal axis and `gamma` upward.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::Classification;
use crate::sweep::{CellResult, MapResult};

/// Colour scale saturates beyond this `|log RR|`.
pub const CLIP: f64 = 2.0;

const PANEL: f64 = 360.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 50.0;
const GAP: f64 = 70.0;
const LEGEND: f64 = 190.0;
const MISSING: &str = "#bdbdbd";

/// Text shown with the figure.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgLabels {
    pub title: String,
    pub fingerprint: String,
}

impl SvgLabels {
    pub fn for_map(map: &MapResult) -> Self {
        Self {
            title: format!("{} map, T = {}", map.mode, trim_number(map.t)),
            fingerprint: map.fingerprint.clone(),
        }
    }
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Diverging blue-white-red colour for a log risk ratio.
pub fn diverging_color(log_rr: f64) -> String {
    if !log_rr.is_finite() {
        return MISSING.into();
    }
    let s = (log_rr / CLIP).clamp(-1.0, 1.0);
    let end = if s >= 0.0 {
        (178.0, 24.0, 43.0)
    } else {
        (33.0, 102.0, 172.0)
    };
    let a = s.abs();
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

pub fn class_color(c: Classification) -> &'static str {
    match c {
        Classification::DirectionUnbiased => "#d9d9d9",
        Classification::DirectionBiased => "#d7301f",
        Classification::NullConsistent => "#ffffff",
        Classification::Indeterminate => "#fdd49e",
    }
}

fn unique_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

fn position(axis: &[f64], v: f64) -> usize {
    axis.iter().position(|&a| (a - v).abs() < 1e-9).expect("value on axis")
}

/// Label every k-th tick so that at most about a dozen are drawn.
fn tick_stride(n: usize) -> usize {
    n.div_ceil(12).max(1)
}

pub fn heatmap_svg(cells: &[CellResult], labels: &SvgLabels) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::invalid("cells", "nothing to render"));
    }
    let betas = unique_sorted(cells.iter().map(|c| c.beta));
    let gammas = unique_sorted(cells.iter().map(|c| c.gamma));
    let cw = PANEL / betas.len() as f64;
    let ch = PANEL / gammas.len() as f64;
    let width = LEFT + PANEL + LEGEND;
    let height = TOP + 2.0 * PANEL + GAP + 50.0;
    let panels = [TOP, TOP + PANEL + GAP];

    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"##
    )
    .ok();
    writeln!(w, "<metadata>fingerprint={}</metadata>", escape(&labels.fingerprint)).ok();
    writeln!(w, r##"<rect width="100%" height="100%" fill="white"/>"##).ok();
    writeln!(
        w,
        r##"<text x="{LEFT}" y="20" font-size="14">{}</text>"##,
        escape(&labels.title)
    )
    .ok();
    writeln!(
        w,
        r##"<text x="{LEFT}" y="36" fill="#555">fingerprint {}</text>"##,
        escape(&labels.fingerprint)
    )
    .ok();

    for (panel, &y0) in panels.iter().enumerate() {
        writeln!(w, r##"<g id="{}">"##, if panel == 0 { "log-rr" } else { "direction" }).ok();
        for c in cells {
            let x = LEFT + position(&betas, c.beta) as f64 * cw;
            let y = y0 + (gammas.len() - 1 - position(&gammas, c.gamma)) as f64 * ch;
            let fill = if panel == 0 {
                diverging_color(c.mean_log_rr)
            } else {
                class_color(c.classification).to_string()
            };
            writeln!(
                w,
                r##"<rect x="{x:.3}" y="{y:.3}" width="{cw:.3}" height="{ch:.3}" fill="{fill}"/>"##
            )
            .ok();
            if panel == 0 && c.mean_log_rr.is_finite() && c.mean_log_rr.abs() > CLIP {
                let r = 0.18 * cw.min(ch);
                let marker = if c.mean_log_rr > 0.0 { "white" } else { "black" };
                writeln!(
                    w,
                    r##"<circle class="clipped" cx="{:.3}" cy="{:.3}" r="{r:.3}" fill="{marker}"/>"##,
                    x + cw / 2.0,
                    y + ch / 2.0
                )
                .ok();
            }
        }
        writeln!(
            w,
            r##"<rect x="{LEFT}" y="{y0}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#333"/>"##
        )
        .ok();
        let bs = tick_stride(betas.len());
        for (i, b) in betas.iter().enumerate().filter(|(i, _)| i % bs == 0) {
            let x = LEFT + (i as f64 + 0.5) * cw;
            writeln!(
                w,
                r##"<text x="{x:.3}" y="{:.3}" text-anchor="middle" font-size="10">{}</text>"##,
                y0 + PANEL + 14.0,
                trim_number(*b)
            )
            .ok();
        }
        let gs = tick_stride(gammas.len());
        for (i, g) in gammas.iter().enumerate().filter(|(i, _)| i % gs == 0) {
            let y = y0 + (gammas.len() - 1 - i) as f64 * ch + ch / 2.0 + 3.0;
            writeln!(
                w,
                r##"<text x="{:.3}" y="{y:.3}" text-anchor="end" font-size="10">{}</text>"##,
                LEFT - 6.0,
                trim_number(*g)
            )
            .ok();
        }
        writeln!(
            w,
            r##"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-size="14">β</text>"##,
            LEFT + PANEL / 2.0,
            y0 + PANEL + 32.0
        )
        .ok();
        writeln!(
            w,
            r##"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-size="14">γ</text>"##,
            LEFT - 40.0,
            y0 + PANEL / 2.0
        )
        .ok();
        writeln!(w, "</g>").ok();
    }

    // Colour bar for the top panel.
    let lx = LEFT + PANEL + 30.0;
    writeln!(w, r##"<g id="legend">"##).ok();
    writeln!(w, r##"<text x="{lx}" y="{}">log RR</text>"##, TOP - 6.0).ok();
    let steps = 40;
    let bar = PANEL * 0.8;
    for i in 0..steps {
        let v = CLIP - (i as f64 + 0.5) * 2.0 * CLIP / steps as f64;
        writeln!(
            w,
            r##"<rect x="{lx}" y="{:.3}" width="18" height="{:.3}" fill="{}"/>"##,
            TOP + i as f64 * bar / steps as f64,
            bar / steps as f64 + 0.2,
            diverging_color(v)
        )
        .ok();
    }
    for (v, frac) in [(CLIP, 0.0), (0.0, 0.5), (-CLIP, 1.0)] {
        writeln!(
            w,
            r##"<text x="{}" y="{:.3}" font-size="10">{}</text>"##,
            lx + 24.0,
            TOP + frac * bar + 4.0,
            trim_number(v)
        )
        .ok();
    }
    let my = TOP + bar + 22.0;
    writeln!(
        w,
        r##"<circle cx="{}" cy="{my}" r="4" fill="black" stroke="#333"/>"##,
        lx + 9.0
    )
    .ok();
    writeln!(
        w,
        r##"<text x="{}" y="{}" font-size="10">below −{CLIP}</text>"##,
        lx + 20.0,
        my + 4.0
    )
    .ok();
    writeln!(
        w,
        r##"<circle cx="{}" cy="{}" r="4" fill="white" stroke="#333"/>"##,
        lx + 9.0,
        my + 16.0
    )
    .ok();
    writeln!(
        w,
        r##"<text x="{}" y="{}" font-size="10">above {CLIP}</text>"##,
        lx + 20.0,
        my + 20.0
    )
    .ok();

    let cy = panels[1];
    for (i, c) in [
        Classification::DirectionUnbiased,
        Classification::DirectionBiased,
        Classification::NullConsistent,
        Classification::Indeterminate,
    ]
    .into_iter()
    .enumerate()
    {
        let y = cy + i as f64 * 22.0;
        writeln!(
            w,
            r##"<rect x="{lx}" y="{y}" width="14" height="14" fill="{}" stroke="#333"/>"##,
            class_color(c)
        )
        .ok();
        writeln!(
            w,
            r##"<text x="{}" y="{}" font-size="11">{}</text>"##,
            lx + 20.0,
            y + 11.0,
            c.as_str()
        )
        .ok();
    }
    writeln!(w, "</g>").ok();
    writeln!(w, "</svg>").ok();
    Ok(s)
}

pub fn render_heatmap_svg(map: &MapResult, path: &Path) -> Result<()> {
    write_svg(&map.cells, &SvgLabels::for_map(map), path)
}

pub fn write_svg(cells: &[CellResult], labels: &SvgLabels, path: &Path) -> Result<()> {
    let svg = heatmap_svg(cells, labels)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{run_exact_map, GridSpec, TimeSpec};

    fn labels() -> SvgLabels {
        SvgLabels {
            title: "test".into(),
            fingerprint: "abc123".into(),
        }
    }

    fn rects(svg: &str, group: &str) -> Vec<String> {
        let start = svg.find(&format!(r##"<g id="{group}">"##)).unwrap();
        let end = start + svg[start..].find("</g>").unwrap();
        svg[start..end]
            .lines()
            .filter(|l| l.starts_with("<rect") && !l.contains(r##"fill="none""##))
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn color_scale() {
        assert_eq!(diverging_color(0.0), "#ffffff");
        assert_eq!(diverging_color(2.0), "#b2182b");
        assert_eq!(diverging_color(5.0), "#b2182b");
        assert_eq!(diverging_color(-2.0), "#2166ac");
        assert_eq!(diverging_color(f64::NAN), MISSING);
    }

    #[test]
    fn single_cell() {
        let map = run_exact_map(&GridSpec::square(0.0, 0.0, 1.0), 1e-4, 1e-2, TimeSpec::Fixed(450.0)).unwrap();
        let svg = heatmap_svg(&map.cells, &SvgLabels::for_map(&map)).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(rects(&svg, "log-rr").len(), 1);
        assert_eq!(rects(&svg, "direction").len(), 1);
        assert!(svg.contains(&format!("<metadata>fingerprint={}</metadata>", map.fingerprint)));
        assert!(svg.contains(">β<") && svg.contains(">γ<"));
    }

    #[test]
    fn null_map_is_uniform_midpoint() {
        let cells: Vec<CellResult> = (0..9)
            .map(|i| CellResult {
                beta: (i / 3) as f64,
                gamma: (i % 3) as f64,
                mean_log_rr: 0.0,
                se: 0.0,
                replicates_used: 1,
                replicates_dropped: 0,
                classification: Classification::NullConsistent,
                status: "ok".into(),
            })
            .collect();
        let svg = heatmap_svg(&cells, &labels()).unwrap();
        let top = rects(&svg, "log-rr");
        assert_eq!(top.len(), 9);
        assert!(top.iter().all(|r| r.contains(r##"fill="#ffffff""##)));
    }

    #[test]
    fn clipped_cells_are_marked() {
        let mut cells = vec![CellResult {
            beta: 0.0,
            gamma: 0.0,
            mean_log_rr: 3.0,
            se: 0.0,
            replicates_used: 1,
            replicates_dropped: 0,
            classification: Classification::DirectionBiased,
            status: "ok".into(),
        }];
        assert!(heatmap_svg(&cells, &labels()).unwrap().contains(r##"class="clipped""##));
        cells[0].mean_log_rr = 1.0;
        assert!(!heatmap_svg(&cells, &labels()).unwrap().contains(r##"class="clipped""##));
    }

    #[test]
    fn bias_lobes_follow_classification() {
        let map = run_exact_map(
            &GridSpec::square(-3.0, 3.0, 1.0),
            1e-4,
            1e-2,
            TimeSpec::TargetIncidence(0.15),
        )
        .unwrap();
        let svg = heatmap_svg(&map.cells, &SvgLabels::for_map(&map)).unwrap();
        let biased = rects(&svg, "direction")
            .iter()
            .filter(|r| r.contains(class_color(Classification::DirectionBiased)))
            .count();
        let expected = map
            .cells
            .iter()
            .filter(|c| c.classification == Classification::DirectionBiased)
            .count();
        assert!(expected > 0);
        assert_eq!(biased, expected);
    }
}
