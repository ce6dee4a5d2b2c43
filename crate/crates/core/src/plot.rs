//! Curve CSV emission and a self-contained SVG line chart.
//!
//! Both outputs are byte-deterministic for identical inputs: fixed float
//! formatting, fixed system ordering (input order), no timestamps.

use std::path::Path;

use thiserror::Error;

use crate::eval::WeeklyCurve;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no curves to plot")]
    NoCurves,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> PlotError {
    PlotError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `system,week,mean_auc,std_auc` rows, one per curve point.
pub fn write_curves_csv(curves: &[WeeklyCurve], path: &Path) -> Result<(), PlotError> {
    if curves.is_empty() {
        return Err(PlotError::NoCurves);
    }
    let mut out = String::from("system,week,mean_auc,std_auc\n");
    for curve in curves {
        for p in &curve.points {
            out.push_str(&format!(
                "{},{},{:.4},{:.4}\n",
                curve.system, p.week, p.mean_auc, p.std_auc
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads curves back from the CSV schema above, grouping rows by system
/// in first-seen order.
pub fn read_curves_csv(path: &Path) -> Result<Vec<WeeklyCurve>, PlotError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut curves: Vec<WeeklyCurve> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "system,week,mean_auc,std_auc" {
                return Err(PlotError::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    msg: format!("unexpected header '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(PlotError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: "expected 4 comma-separated fields".into(),
            });
        }
        let bad = |msg: String| PlotError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg,
        };
        let week: u32 = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad week '{}'", fields[1])))?;
        let mean_auc: f64 = fields[2]
            .parse()
            .map_err(|_| bad(format!("bad mean '{}'", fields[2])))?;
        let std_auc: f64 = fields[3]
            .parse()
            .map_err(|_| bad(format!("bad std '{}'", fields[3])))?;
        let point = crate::eval::WeekPoint {
            week,
            mean_auc,
            std_auc,
            folds: 0,
        };
        match curves.iter_mut().find(|c| c.system == fields[0]) {
            Some(curve) => curve.points.push(point),
            None => curves.push(WeeklyCurve {
                system: fields[0].to_string(),
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 200.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// Renders the curves as an SVG line chart with markers and a legend.
pub fn write_curves_svg(curves: &[WeeklyCurve], path: &Path) -> Result<(), PlotError> {
    if curves.is_empty() || curves.iter().all(|c| c.points.is_empty()) {
        return Err(PlotError::NoCurves);
    }
    let weeks: Vec<u32> = {
        let mut w: Vec<u32> = curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.week))
            .collect();
        w.sort_unstable();
        w.dedup();
        w
    };
    let week_min = f64::from(*weeks.first().expect("nonempty"));
    let week_max = f64::from(*weeks.last().expect("nonempty")).max(week_min + 1.0);

    let mut y_min: f64 = 100.0;
    let mut y_max: f64 = 0.0;
    for p in curves.iter().flat_map(|c| &c.points) {
        y_min = y_min.min(p.mean_auc - p.std_auc);
        y_max = y_max.max(p.mean_auc + p.std_auc);
    }
    let y_lo = ((y_min - 5.0) / 10.0).floor() * 10.0;
    let y_lo = y_lo.clamp(0.0, 90.0);
    let y_hi = (((y_max + 5.0) / 10.0).ceil() * 10.0).clamp(y_lo + 10.0, 100.0);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |week: f64| MARGIN_LEFT + (week - week_min) / (week_max - week_min) * plot_w;
    let y_of = |auc: f64| MARGIN_TOP + (y_hi - auc) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // horizontal gridlines every 10 AUC points
    let mut grid = y_lo;
    while grid <= y_hi + 1e-9 {
        let y = y_of(grid);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{grid:.0}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0
        ));
        grid += 10.0;
    }
    for &week in &weeks {
        let x = x_of(f64::from(week));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{week}</text>\n",
            MARGIN_TOP + plot_h + 20.0
        ));
    }

    // axes and labels
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{:.2}\" \
         stroke=\"black\" stroke-width=\"1.5\"/>\n",
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
         stroke=\"black\" stroke-width=\"1.5\"/>\n",
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">week</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.2})\">AUC (%)</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    for (idx, curve) in curves.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x_of(f64::from(p.week)), y_of(p.mean_auc)))
            .collect();
        if pts.len() > 1 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                pts.join(" ")
            ));
        }
        for p in &curve.points {
            let x = x_of(f64::from(p.week));
            // std whiskers
            if p.std_auc > 0.0 {
                svg.push_str(&format!(
                    "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                     stroke=\"{color}\" stroke-width=\"1\" opacity=\"0.6\"/>\n",
                    y_of(p.mean_auc - p.std_auc),
                    y_of(p.mean_auc + p.std_auc)
                ));
            }
            svg.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\"/>\n",
                y_of(p.mean_auc)
            ));
        }
        // legend entry
        let ly = MARGIN_TOP + 16.0 + idx as f64 * 22.0;
        let lx = MARGIN_LEFT + plot_w + 16.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 24.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            lx + 30.0,
            ly + 4.0,
            curve.system
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{WeekPoint, WeeklyCurve};

    fn demo_curves(systems: usize, weeks: u32) -> Vec<WeeklyCurve> {
        (0..systems)
            .map(|s| WeeklyCurve {
                system: format!("system-{s}"),
                points: (1..=weeks)
                    .map(|week| WeekPoint {
                        week,
                        mean_auc: 55.0 + s as f64 * 5.0 + f64::from(week),
                        std_auc: 2.0,
                        folds: 5,
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn csv_has_one_row_per_point_plus_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        write_curves_csv(&demo_curves(4, 8), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 32);
        assert!(text.starts_with("system,week,mean_auc,std_auc\n"));
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        let curves = demo_curves(2, 3);
        write_curves_csv(&curves, &path).unwrap();
        let back = read_curves_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].system, "system-0");
        assert_eq!(back[0].points.len(), 3);
        assert_eq!(back[1].points[2].mean_auc, 63.0);
    }

    #[test]
    fn outputs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let curves = demo_curves(3, 4);
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        write_curves_svg(&curves, &a).unwrap();
        write_curves_svg(&curves, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

        let (ca, cb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_curves_csv(&curves, &ca).unwrap();
        write_curves_csv(&curves, &cb).unwrap();
        assert_eq!(std::fs::read(&ca).unwrap(), std::fs::read(&cb).unwrap());
    }

    #[test]
    fn empty_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_curves_csv(&[], &dir.path().join("x.csv")),
            Err(PlotError::NoCurves)
        ));
        assert!(matches!(
            write_curves_svg(&[], &dir.path().join("x.svg")),
            Err(PlotError::NoCurves)
        ));
    }

    #[test]
    fn svg_mentions_every_system_in_legend() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.svg");
        write_curves_svg(&demo_curves(4, 8), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for s in 0..4 {
            assert!(text.contains(&format!("system-{s}")));
        }
        assert!(text.contains("<polyline"));
    }
}
