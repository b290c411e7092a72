//! Per-neuron `r_f` scores and per-component distribution summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{activation_name, ActivationDump};
use crate::numfmt::format_sig;
use crate::zero_ph::zero_persistence_scalars;
use crate::{Component, Error, Result};

pub const RF_CSV_HEADER: &str = "layer,component,median_rf,p30,p50,p70";
pub const SCORES_CSV_HEADER: &str = "layer,component,neuron,r_f,mean,std";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronScore {
    pub layer: usize,
    pub component: Component,
    pub neuron: usize,
    pub r_f: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl NeuronScore {
    pub fn compensation(&self) -> f64 {
        self.mean + self.std
    }
}

/// Scores of one `(layer, component)`, ordered by neuron index.
#[derive(Debug, Clone, PartialEq)]
pub struct RfDistribution {
    pub layer: usize,
    pub component: Component,
    pub scores: Vec<NeuronScore>,
    pub median_rf: f64,
    pub p30: f64,
    pub p50: f64,
    pub p70: f64,
}

impl RfDistribution {
    pub fn width(&self) -> usize {
        self.scores.len()
    }

    pub fn r_f_values(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.r_f).collect()
    }

    pub fn percentile(&self, p: u32) -> f64 {
        match p {
            30 => self.p30,
            50 => self.p50,
            70 => self.p70,
            _ => percentile(&self.r_f_values(), p as f64).expect("non-empty distribution"),
        }
    }
}

/// Linear interpolation between closest ranks of the ascending sort, with
/// rank `p·(n−1)/100`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64 / 100.0;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// `(r_f, mean, population std)` of one neuron's outputs. Sums run over the
/// sorted values so the result does not depend on row order.
pub fn score_values(values: &[f64]) -> Result<(f64, f64, f64)> {
    let r_f = zero_persistence_scalars(values)?.r_f;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((r_f, mean, var.sqrt()))
}

/// Scores every neuron of every component, ordered by layer, component and
/// neuron index.
pub fn score_neurons(dump: &ActivationDump) -> Result<Vec<NeuronScore>> {
    for (&(l, c), m) in &dump.entries {
        if let Some(pos) = m.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "`{}` (row {}, neuron {})",
                activation_name(l, c),
                pos / m.cols.max(1),
                pos % m.cols.max(1)
            )));
        }
    }
    let groups: Vec<_> = dump.entries.iter().collect();
    let scored = groups
        .par_iter()
        .map(|(&(layer, component), m)| {
            (0..m.cols)
                .into_par_iter()
                .map(|j| {
                    let column: Vec<f64> =
                        (0..m.rows).map(|r| m.data[r * m.cols + j] as f64).collect();
                    let (r_f, mean, std) = score_values(&column)?;
                    Ok(NeuronScore {
                        layer,
                        component,
                        neuron: j,
                        r_f,
                        mean,
                        std,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scored.into_iter().flatten().collect())
}

/// Groups scores by `(layer, component)` and computes median and P30/P50/P70.
pub fn summarize(scores: &[NeuronScore]) -> Result<Vec<RfDistribution>> {
    let mut groups: BTreeMap<(usize, Component), Vec<NeuronScore>> = BTreeMap::new();
    for s in scores {
        groups.entry((s.layer, s.component)).or_default().push(*s);
    }
    groups
        .into_iter()
        .map(|((layer, component), mut scores)| {
            scores.sort_by_key(|s| s.neuron);
            for (i, s) in scores.iter().enumerate() {
                if s.neuron != i {
                    return Err(Error::invalid(format!(
                        "layer {layer} {component}: neuron indices are not 0..{}",
                        scores.len()
                    )));
                }
            }
            let mut sorted: Vec<f64> = scores.iter().map(|s| s.r_f).collect();
            sorted.sort_by(f64::total_cmp);
            let p50 = percentile_sorted(&sorted, 50.0);
            Ok(RfDistribution {
                layer,
                component,
                median_rf: p50,
                p30: percentile_sorted(&sorted, 30.0),
                p50,
                p70: percentile_sorted(&sorted, 70.0),
                scores,
            })
        })
        .collect()
}

pub fn write_rf_csv<W: Write>(distributions: &[RfDistribution], mut out: W) -> Result<()> {
    writeln!(out, "{RF_CSV_HEADER}")?;
    for d in distributions {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            d.layer,
            d.component,
            format_sig(d.median_rf, 9),
            format_sig(d.p30, 9),
            format_sig(d.p50, 9),
            format_sig(d.p70, 9)
        )?;
    }
    Ok(())
}

/// Per-neuron scores at full round-trip precision.
pub fn write_scores_csv<W: Write>(scores: &[NeuronScore], mut out: W) -> Result<()> {
    writeln!(out, "{SCORES_CSV_HEADER}")?;
    for s in scores {
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?}",
            s.layer, s.component, s.neuron, s.r_f, s.mean, s.std
        )?;
    }
    Ok(())
}

pub fn read_scores_csv(text: &str) -> Result<Vec<NeuronScore>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == SCORES_CSV_HEADER => {}
        _ => {
            return Err(Error::invalid(format!(
                "scores CSV must start with `{SCORES_CSV_HEADER}`"
            )))
        }
    }
    lines
        .map(|(no, line)| {
            let bad =
                |what: &str| Error::invalid(format!("scores CSV line {}: bad {what}", no + 1));
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 6 {
                return Err(bad("field count"));
            }
            let real = |i: usize, what: &str| fields[i].parse::<f64>().map_err(|_| bad(what));
            let score = NeuronScore {
                layer: fields[0].parse().map_err(|_| bad("layer"))?,
                component: fields[1].parse().map_err(|_| bad("component"))?,
                neuron: fields[2].parse().map_err(|_| bad("neuron"))?,
                r_f: real(3, "r_f")?,
                mean: real(4, "mean")?,
                std: real(5, "std")?,
            };
            if !(score.r_f >= 0.0 && score.std >= 0.0 && score.mean.is_finite())
                || score.r_f.is_infinite()
            {
                return Err(bad("value"));
            }
            Ok(score)
        })
        .collect()
}

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// Line chart of median `r_f` per layer, one series per component.
pub fn render_medians_svg(distributions: &[RfDistribution]) -> String {
    let (width, height) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 30.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let max_layer = distributions.iter().map(|d| d.layer).max().unwrap_or(1);
    let min_layer = distributions.iter().map(|d| d.layer).min().unwrap_or(1);
    let y_max = distributions
        .iter()
        .map(|d| d.median_rf)
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let x = |layer: usize| {
        if max_layer == min_layer {
            left + plot_w / 2.0
        } else {
            left + plot_w * (layer - min_layer) as f64 / (max_layer - min_layer) as f64
        }
    };
    let y = |v: f64| top + plot_h * (1.0 - v / y_max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="18" text-anchor="middle">Median r_f per layer</text>"#,
        left + plot_w / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{left:.1} {top:.1} V{:.1} H{:.1}" stroke="black" fill="none"/>"#,
        top + plot_h,
        left + plot_w
    );
    for layer in min_layer..=max_layer {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{layer}</text>"#,
            x(layer),
            top + plot_h + 16.0
        );
    }
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y(v) + 4.0,
            format_sig(v, 3)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">layer</text>"#,
        left + plot_w / 2.0,
        height - 12.0
    );

    for (ci, comp) in Component::ALL.into_iter().enumerate() {
        let points: Vec<String> = distributions
            .iter()
            .filter(|d| d.component == comp)
            .map(|d| format!("{:.2},{:.2}", x(d.layer), y(d.median_rf)))
            .collect();
        if points.is_empty() {
            continue;
        }
        let color = SERIES_COLORS[ci];
        let _ = writeln!(
            svg,
            r#"<polyline data-component="{comp}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = top + 10.0 + 18.0 * ci as f64;
        let lx = left + plot_w + 20.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{comp}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `rf.csv`, `scores.csv` and `medians.svg` into `dir`.
pub fn export_report(distributions: &[RfDistribution], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut rf = Vec::new();
    write_rf_csv(distributions, &mut rf)?;
    std::fs::write(dir.join("rf.csv"), rf)?;
    let scores: Vec<NeuronScore> = distributions
        .iter()
        .flat_map(|d| d.scores.iter().copied())
        .collect();
    let mut buf = Vec::new();
    write_scores_csv(&scores, &mut buf)?;
    std::fs::write(dir.join("scores.csv"), buf)?;
    std::fs::write(dir.join("medians.svg"), render_medians_svg(distributions))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dump_of(columns: &[(usize, Component, Vec<Vec<f32>>)]) -> ActivationDump {
        let mut entries = BTreeMap::new();
        let mut rows = 0;
        for (l, c, rows_data) in columns {
            rows = rows_data.len();
            let cols = rows_data[0].len();
            let data = rows_data.iter().flatten().copied().collect();
            entries.insert((*l, *c), Matrix { rows, cols, data });
        }
        ActivationDump {
            rows,
            capture: None,
            entries,
        }
    }

    #[test]
    fn closed_form_neuron() {
        let (r_f, mean, std) = score_values(&[0.0, 1.0, 3.0]).unwrap();
        assert_eq!(r_f, 1.0);
        assert_relative_eq!(mean, 4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(std, (14.0f64 / 9.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn constant_neuron() {
        assert_eq!(score_values(&[2.5; 7]).unwrap(), (0.0, 2.5, 0.0));
    }

    #[test]
    fn percentile_rule() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_relative_eq!(percentile(&v, 30.0).unwrap(), 3.7, epsilon = 1e-12);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 10.0);
        assert_eq!(percentile(&[4.0; 5], 70.0).unwrap(), 4.0);
        assert_eq!(percentile(&[9.0], 50.0).unwrap(), 9.0);
        assert!(percentile(&[], 50.0).is_err());
    }

    #[test]
    fn scores_are_ordered_and_named() {
        let dump = dump_of(&[
            (
                1,
                Component::V,
                vec![vec![0.0, 5.0], vec![1.0, 5.0], vec![3.0, 5.0]],
            ),
            (1, Component::Q, vec![vec![1.0], vec![2.0], vec![4.0]]),
        ]);
        let scores = score_neurons(&dump).unwrap();
        let keys: Vec<_> = scores.iter().map(|s| (s.component, s.neuron)).collect();
        assert_eq!(
            keys,
            [(Component::Q, 0), (Component::V, 0), (Component::V, 1)]
        );
        assert_eq!(scores[1].r_f, 1.0);
        assert_eq!(scores[2].std, 0.0);
    }

    #[test]
    fn non_finite_names_tensor() {
        let dump = dump_of(&[(
            2,
            Component::Intermediate,
            vec![vec![0.0, 1.0], vec![f32::NAN, 1.0]],
        )]);
        let err = score_neurons(&dump).unwrap_err().to_string();
        assert!(err.contains("act.layer.2.Intermediate"), "{err}");
    }

    #[test]
    fn summary_and_csv() {
        let scores: Vec<NeuronScore> = (0..10)
            .map(|j| NeuronScore {
                layer: 3,
                component: Component::Intermediate,
                neuron: j,
                r_f: (j + 1) as f64,
                mean: 0.5,
                std: 0.25,
            })
            .collect();
        let d = summarize(&scores).unwrap();
        assert_eq!(d.len(), 1);
        assert_relative_eq!(d[0].p30, 3.7, epsilon = 1e-12);
        assert_eq!(d[0].median_rf, 5.5);
        let mut csv = Vec::new();
        write_rf_csv(&d, &mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "layer,component,median_rf,p30,p50,p70\n3,Intermediate,5.5,3.7,5.5,7.3\n"
        );
        let mut raw = Vec::new();
        write_scores_csv(&scores, &mut raw).unwrap();
        assert_eq!(
            read_scores_csv(std::str::from_utf8(&raw).unwrap()).unwrap(),
            scores
        );
    }

    #[test]
    fn summary_rejects_gaps() {
        let s = NeuronScore {
            layer: 1,
            component: Component::Q,
            neuron: 1,
            r_f: 1.0,
            mean: 0.0,
            std: 0.0,
        };
        assert!(summarize(&[s]).is_err());
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut scores = Vec::new();
        for layer in 1..=12 {
            for component in Component::ALL {
                for neuron in 0..3 {
                    let r_f = (layer * neuron) as f64 * 0.1;
                    scores.push(NeuronScore {
                        layer,
                        component,
                        neuron,
                        r_f,
                        mean: 0.0,
                        std: 1.0,
                    });
                }
            }
        }
        let d = summarize(&scores).unwrap();
        export_report(&d, dir.path()).unwrap();
        let rf = std::fs::read_to_string(dir.path().join("rf.csv")).unwrap();
        assert_eq!(rf.lines().count(), 73);
        let svg = std::fs::read_to_string(dir.path().join("medians.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert_eq!(svg, render_medians_svg(&d));

        // Q and K carry identical scores, so their series coincide.
        let q = svg
            .lines()
            .find(|l| l.contains(r#"data-component="Q""#))
            .unwrap();
        let k = svg
            .lines()
            .find(|l| l.contains(r#"data-component="K""#))
            .unwrap();
        assert_eq!(
            q.split("points=").nth(1).unwrap().split('"').nth(1),
            k.split("points=").nth(1).unwrap().split('"').nth(1)
        );
    }

    fn column() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..40)
    }

    proptest! {
        #[test]
        fn shift_and_scale(values in column(), t in -50.0f64..50.0, c in 0.01f64..20.0) {
            let (r, m, s) = score_values(&values).unwrap();
            let shifted: Vec<f64> = values.iter().map(|v| v + t).collect();
            let (r2, m2, s2) = score_values(&shifted).unwrap();
            prop_assert!((r2 - r).abs() <= 1e-9 * (1.0 + r.abs() + t.abs()));
            prop_assert!((m2 - (m + t)).abs() <= 1e-9 * (1.0 + m.abs() + t.abs()));
            prop_assert!((s2 - s).abs() <= 1e-9 * (1.0 + s + t.abs()));
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let (r3, _, s3) = score_values(&scaled).unwrap();
            prop_assert!((r3 - c * r).abs() <= 1e-9 * (1.0 + c * r));
            prop_assert!((s3 - c * s).abs() <= 1e-9 * (1.0 + c * s));
        }

        #[test]
        fn r_f_is_half_the_largest_gap(values in column()) {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            prop_assert_eq!(score_values(&values).unwrap().0, gap / 2.0);
        }

        #[test]
        fn row_permutation_changes_nothing(
            rows in prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 3), 2..20),
            seed in any::<u64>(),
        ) {
            let mut shuffled = rows.clone();
            let mut rng = crate::encoder::rng::SplitMix64::new(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.next_below(i as u64 + 1) as usize);
            }
            let a = score_neurons(&dump_of(&[(3, Component::V, rows)])).unwrap();
            let b = score_neurons(&dump_of(&[(3, Component::V, shuffled)])).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn percentiles_are_monotone(values in prop::collection::vec(0.0f64..10.0, 1..60)) {
            let scores: Vec<NeuronScore> = values.iter().enumerate().map(|(neuron, &r_f)| NeuronScore {
                layer: 4, component: Component::K, neuron, r_f, mean: 0.0, std: 0.0,
            }).collect();
            let d = &summarize(&scores).unwrap()[0];
            prop_assert!(d.p30 <= d.p50 && d.p50 <= d.p70);
            prop_assert_eq!(d.median_rf, d.p50);
        }
    }
}
