//! Standalone SVG line plots of a rollout, one file per panel.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::log::RolloutLog;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// Letter `a`..`f`.
    pub id: char,
    pub slug: &'static str,
    pub title: &'static str,
    pub y_label: &'static str,
    pub time: Vec<f64>,
    pub series: Vec<Series>,
}

fn series(label: &str, values: Vec<f64>) -> Series {
    Series {
        label: label.to_string(),
        values,
        dashed: false,
    }
}

pub fn panels(log: &RolloutLog) -> Vec<Panel> {
    let col = |f: fn(&super::log::RolloutRow) -> f64| log.rows.iter().map(f).collect::<Vec<f64>>();
    let time = col(|r| r.time);
    let mut ankle_ref = series("reference", col(|r| r.ankle_ref));
    ankle_ref.dashed = true;
    let mk = |id, slug, title, y_label, series| Panel {
        id,
        slug,
        title,
        y_label,
        time: time.clone(),
        series,
    };
    vec![
        mk(
            'a',
            "ankle_angle",
            "Ankle joint angle",
            "angle [rad]",
            vec![ankle_ref, series("measured", col(|r| r.ankle_measured))],
        ),
        mk(
            'b',
            "orientation",
            "Torso, pelvis and foot pitch",
            "pitch [rad]",
            vec![
                series("torso", col(|r| r.torso_pitch)),
                series("pelvis", col(|r| r.pelvis_pitch)),
                series("foot", col(|r| r.foot_pitch)),
            ],
        ),
        mk(
            'c',
            "pitch_rate",
            "Pitch rates",
            "rate [rad/s]",
            vec![
                series("torso", col(|r| r.torso_rate)),
                series("pelvis", col(|r| r.pelvis_rate)),
                series("foot", col(|r| r.foot_rate)),
            ],
        ),
        mk(
            'd',
            "capture_point",
            "Capture point and COM",
            "x [m]",
            vec![
                series("capture point", col(|r| r.capture_x)),
                series("COM", col(|r| r.com_x)),
            ],
        ),
        mk(
            'e',
            "com_height",
            "COM height",
            "z [m]",
            vec![series("COM", col(|r| r.com_z))],
        ),
        mk(
            'f',
            "joint_torque",
            "Joint torques",
            "torque [N·m]",
            vec![
                series("ankle", col(|r| r.torque[0])),
                series("knee", col(|r| r.torque[1])),
                series("hip", col(|r| r.torque[2])),
                series("waist", col(|r| r.torque[3])),
            ],
        ),
    ]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Padded data range; a flat series gets a symmetric unit-scale window.
fn y_range(panel: &Panel) -> (f64, f64) {
    let finite = panel
        .series
        .iter()
        .flat_map(|s| s.values.iter())
        .copied()
        .filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let span = hi - lo;
    if span <= 1e-12 * lo.abs().max(1.0) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// Round tick positions covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target.max(1) as f64;
    if !(raw > 0.0 && raw.is_finite()) {
        return vec![lo];
    }
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| k as f64 * step)
        .map(|v| if v.abs() < 1e-9 * step { 0.0 } else { v })
        .collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub fn render_svg(panel: &Panel) -> String {
    let (t0, t1) = match (panel.time.first(), panel.time.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let (y0, y1) = y_range(panel);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t - t0) / (t1 - t0) * pw;
    let sy = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">({}) {}</text>"#,
        LEFT + pw / 2.0,
        panel.id,
        escape(panel.title)
    );

    s.push_str(r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = write!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none"/>"#
    );
    s.push_str("</g>\n<g class=\"ticks\">");
    for t in ticks(t0, t1, 6) {
        let x = sx(t);
        let _ = write!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(t)
        );
    }
    for v in ticks(y0, y1, 5) {
        let y = sy(v);
        let _ = write!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            tick_label(v)
        );
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">time [s]</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(panel.y_label)
    );

    for (i, se) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = if se.dashed { r#" stroke-dasharray="6 3""# } else { "" };
        let mut points = String::new();
        for (t, v) in panel.time.iter().zip(&se.values) {
            if v.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", sx(*t), sy(*v));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            escape(&se.label),
            points.trim_end()
        );
    }

    s.push_str("<g class=\"legend\">");
    for (i, se) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let y = TOP + 12.0 + 18.0 * i as f64;
        let x = LEFT + pw + 12.0;
        let dash = if se.dashed { r#" stroke-dasharray="6 3""# } else { "" };
        let _ = write!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 24.0,
            x + 30.0,
            y + 4.0,
            escape(&se.label)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Writes `panel_<id>_<slug>.svg` for every panel into `dir`.
pub fn write_plots(log: &RolloutLog, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    if log.is_empty() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "cannot plot an empty log",
        ));
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for p in panels(log) {
        let path = dir.join(format!("panel_{}_{}.svg", p.id, p.slug));
        fs::write(&path, render_svg(&p))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::log::RolloutRow;

    fn log(n: usize) -> RolloutLog {
        RolloutLog {
            rows: (0..n)
                .map(|k| {
                    let t = k as f64 * 1e-3;
                    RolloutRow {
                        time: t,
                        ankle_ref: 0.1 * t,
                        ankle_measured: 0.09 * t,
                        capture_x: 0.02 + t,
                        com_x: 0.02,
                        com_z: 1.08,
                        torque: [200.0 * t, -10.0, 5.0, 1.0],
                        ..Default::default()
                    }
                })
                .collect(),
        }
    }

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed SVG")
    }

    fn texts(doc: &roxmltree::Document) -> Vec<String> {
        doc.descendants()
            .filter(|n| n.has_tag_name("text"))
            .filter_map(|n| n.text().map(str::to_string))
            .collect()
    }

    #[test]
    fn six_panels_are_well_formed() {
        let ps = panels(&log(500));
        let ids: String = ps.iter().map(|p| p.id).collect();
        assert_eq!(ids, "abcdef");
        for p in &ps {
            let svg = render_svg(p);
            let doc = parse(&svg);
            assert_eq!(doc.root_element().tag_name().name(), "svg");
            let t = texts(&doc);
            assert!(t.contains(&"time [s]".to_string()));
            assert!(t.contains(&p.y_label.to_string()));
            let lines = doc
                .descendants()
                .filter(|n| n.attribute("class") == Some("series"))
                .count();
            assert_eq!(lines, p.series.len());
        }
    }

    #[test]
    fn capture_panel_overlays_two_labeled_series() {
        let p = &panels(&log(100))[3];
        let svg = render_svg(p);
        let doc = parse(&svg);
        let labels: Vec<&str> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("series"))
            .filter_map(|n| n.attribute("data-label"))
            .collect();
        assert_eq!(labels, vec!["capture point", "COM"]);
        let t = texts(&doc);
        assert!(t.contains(&"capture point".to_string()) && t.contains(&"COM".to_string()));
    }

    #[test]
    fn zero_series_is_a_flat_line_at_zero() {
        let mut l = log(50);
        for r in &mut l.rows {
            r.com_z = 0.0;
        }
        let p = &panels(&l)[4];
        let svg = render_svg(p);
        let doc = parse(&svg);
        let line = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("series"))
            .unwrap();
        let ys: Vec<&str> = line
            .attribute("points")
            .unwrap()
            .split(' ')
            .map(|pt| pt.split(',').nth(1).unwrap())
            .collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        // the zero line sits mid-panel and carries a "0" tick
        let mid = TOP + (HEIGHT - TOP - BOTTOM) / 2.0;
        assert!((ys[0].parse::<f64>().unwrap() - mid).abs() < 0.01);
        assert!(texts(&doc).contains(&"0".to_string()));
        assert!(texts(&doc).contains(&"z [m]".to_string()));
    }

    #[test]
    fn tick_positions_are_round() {
        assert_eq!(ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(-1.0, 1.0, 4), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(tick_label(-0.0), "0");
        assert_eq!(tick_label(2.5), "2.5");
    }

    #[test]
    fn writes_one_file_per_panel() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_plots(&log(20), dir.path()).unwrap();
        assert_eq!(paths.len(), 6);
        assert!(paths[5].ends_with("panel_f_joint_torque.svg"));
        for p in paths {
            parse(&fs::read_to_string(p).unwrap());
        }
        assert!(write_plots(&RolloutLog::default(), dir.path()).is_err());
    }
}
