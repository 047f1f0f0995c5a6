//! Minimal SVG emitters for trajectory overlays and step-count box plots.

use crate::geom::Vec2Mm;

const SCALE: f64 = 12.0;
const MARGIN: f64 = 30.0;

pub struct TrajectorySeries<'a> {
    pub label: &'a str,
    pub color: &'a str,
    /// (path, success) per episode.
    pub paths: Vec<(&'a [Vec2Mm], bool)>,
}

fn xy(p: Vec2Mm, height_mm: f64) -> (f64, f64) {
    // world y up, svg y down
    (MARGIN + p.x * SCALE, MARGIN + (height_mm - p.y) * SCALE)
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Trajectory overlay: map border, the peg tolerance disc in green, one
/// polyline per episode with start dots (failures in purple, as in the
/// robustness plots).
pub fn trajectories_svg(
    map_width_mm: f64,
    map_height_mm: f64,
    target: Vec2Mm,
    tolerance_mm: f64,
    series: &[TrajectorySeries<'_>],
) -> String {
    let w = 2.0 * MARGIN + map_width_mm * SCALE;
    let h = 2.0 * MARGIN + map_height_mm * SCALE;
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        fmt(w), fmt(h), fmt(w), fmt(h)
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        fmt(w), fmt(h)
    ));
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n",
        fmt(MARGIN), fmt(MARGIN), fmt(map_width_mm * SCALE), fmt(map_height_mm * SCALE)
    ));
    let (tx, ty) = xy(target, map_height_mm);
    s.push_str(&format!(
        "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#2ca02c\" fill-opacity=\"0.8\"/>\n",
        fmt(tx), fmt(ty), fmt(tolerance_mm * SCALE)
    ));
    for (si, ser) in series.iter().enumerate() {
        s.push_str(&format!("<g id=\"series-{si}\">\n"));
        for (path, success) in &ser.paths {
            if path.is_empty() {
                continue;
            }
            let pts: Vec<String> = path
                .iter()
                .map(|&p| {
                    let (x, y) = xy(p, map_height_mm);
                    format!("{},{}", fmt(x), fmt(y))
                })
                .collect();
            let color = if *success { ser.color } else { "#9467bd" };
            s.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" stroke-opacity=\"0.75\"/>\n",
                pts.join(" "),
                color
            ));
            let (sx, sy) = xy(path[0], map_height_mm);
            s.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
                fmt(sx), fmt(sy), color
            ));
        }
        s.push_str("</g>\n");
    }
    // legend
    let mut ly = 14.0;
    for ser in series {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            fmt(MARGIN),
            fmt(ly),
            ser.color,
            ser.label
        ));
        ly += 13.0;
    }
    s.push_str("</svg>\n");
    s
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// Box plot of per-episode step counts, one box per labelled group.
pub fn runtime_box_svg(groups: &[(String, Vec<f64>)]) -> String {
    let w = 120.0 * groups.len().max(1) as f64 + 80.0;
    let h = 320.0;
    let plot_h = 240.0;
    let max_v = groups
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(1.0f64, f64::max);
    let y_of = |v: f64| 40.0 + plot_h * (1.0 - v / max_v);
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        fmt(w), fmt(h), fmt(w), fmt(h)
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        fmt(w), fmt(h)
    ));
    for (i, (label, values)) in groups.iter().enumerate() {
        let cx = 80.0 + 120.0 * i as f64;
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite step counts"));
        let (q1, med, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
        let lo = sorted.first().copied().unwrap_or(0.0);
        let hi = sorted.last().copied().unwrap_or(0.0);
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333\"/>\n",
            fmt(cx), fmt(y_of(lo)), fmt(y_of(hi))
        ));
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"60\" height=\"{}\" fill=\"#aec7e8\" stroke=\"#333\"/>\n",
            fmt(cx - 30.0),
            fmt(y_of(q3)),
            fmt((y_of(q1) - y_of(q3)).max(1.0))
        ));
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{1}\" x2=\"{}\" y2=\"{1}\" stroke=\"#d62728\" stroke-width=\"2\"/>\n",
            fmt(cx - 30.0),
            fmt(y_of(med)),
            fmt(cx + 30.0)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"300\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(cx), label
        ));
    }
    s.push_str(&format!(
        "<text x=\"12\" y=\"30\" font-family=\"sans-serif\" font-size=\"11\">steps (max {})</text>\n",
        fmt(max_v)
    ));
    s.push_str("</svg>\n");
    s
}
