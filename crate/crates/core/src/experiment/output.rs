use std::fs;
use std::path::{Path, PathBuf};

use csv::Writer;

use super::{theoretical_mean_aoi, ExperimentResults, PendulumReport, ValidationReport};
use crate::aoi::{mse_of_age, nmse_of_age};
use crate::control::{make_preset, SystemClass};
use crate::error::Result;

/// Largest age written to the nMSE-versus-age curves.
pub const NMSE_CURVE_MAX_AGE: u64 = 40;

/// Shortest round-trip decimal for finite values, `inf` otherwise.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

struct Sink {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }
}

/// Writes per-run, summary and per-figure CSV files into `dir` and returns
/// their paths.
pub fn emit_results(results: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut sink = Sink::new(dir)?;

    let mut runs = Vec::new();
    for set in &results.sets {
        for (r, run) in set.reps.runs.iter().enumerate() {
            for l in &run.metrics.loops {
                runs.push(vec![
                    r.to_string(),
                    set.label(),
                    set.n.to_string(),
                    l.loop_id.to_string(),
                    l.class.clone(),
                    format_value(l.mean_aoi),
                    format_value(l.mean_mse),
                    format_value(l.mean_nmse),
                    format_value(l.lqg_cost),
                    l.tx_count.to_string(),
                    l.rx_count.to_string(),
                    format_value(l.delivery_ratio),
                    l.diverged.to_string(),
                ]);
            }
        }
    }
    sink.write(
        "runs.csv",
        &[
            "run_id", "protocol", "N", "loop_id", "class", "mean_aoi", "mean_mse", "mean_nmse", "lqg_cost", "tx_count",
            "rx_count", "delivery_ratio", "diverged",
        ],
        runs,
    )?;

    let summary = results.sets.iter().flat_map(|set| {
        set.reps.summary.iter().map(move |m| {
            vec![
                set.label(),
                set.n.to_string(),
                m.metric.clone(),
                format_value(m.mean),
                opt(m.half_width),
                format_value(m.min),
                format_value(m.max),
                m.n.to_string(),
            ]
        })
    });
    sink.write("summary.csv", &["protocol", "N", "metric", "mean", "ci99_half_width", "min", "max", "reps"], summary)?;

    let pair = |set: &super::RunSet, metric: &str| -> [String; 2] {
        match set.reps.metric(metric) {
            Some(m) => [format_value(m.mean), opt(m.half_width)],
            None => [String::new(), String::new()],
        }
    };

    let aoi = results.sets.iter().map(|s| {
        let [mean, hw] = pair(s, "mean_aoi");
        let theory = if results.ideal_channel { opt(theoretical_mean_aoi(&s.policy, s.n)) } else { String::new() };
        vec![s.label(), s.n.to_string(), mean, hw, theory]
    });
    sink.write("aoi_vs_n.csv", &["protocol", "N", "mean_aoi", "ci99_half_width", "theory"], aoi)?;

    let lqg = results.sets.iter().map(|s| {
        let [mean, hw] = pair(s, "lqg_cost");
        let [div, _] = pair(s, "diverged_loops");
        vec![s.label(), s.n.to_string(), mean, hw, div]
    });
    sink.write("lqg_vs_n.csv", &["protocol", "N", "lqg_cost", "ci99_half_width", "mean_diverged_loops"], lqg)?;

    let mse = results.sets.iter().map(|s| {
        let [m, mh] = pair(s, "mean_mse");
        let [nm, nh] = pair(s, "mean_nmse");
        vec![s.label(), s.n.to_string(), m, mh, nm, nh]
    });
    sink.write("mse_vs_n.csv", &["protocol", "N", "mean_mse", "mse_ci99", "mean_nmse", "nmse_ci99"], mse)?;

    let mut fractions = Vec::new();
    for s in &results.sets {
        for m in s.reps.summary.iter().filter(|m| m.metric.starts_with("fraction_")) {
            fractions.push(vec![
                s.label(),
                s.n.to_string(),
                m.metric["fraction_".len()..].to_string(),
                format_value(m.mean),
                opt(m.half_width),
            ]);
        }
    }
    sink.write("fractions.csv", &["protocol", "N", "class", "fraction", "ci99_half_width"], fractions)?;

    sink.written.push(write_nmse_curves(dir)?);
    Ok(sink.written)
}

/// nMSE against age for every preset, plus the pendulum's raw MSE.
pub fn write_nmse_curves(dir: &Path) -> Result<PathBuf> {
    let mut sink = Sink::new(dir)?;
    let systems = SystemClass::ALL.iter().map(|&c| make_preset(c)).collect::<Result<Vec<_>>>()?;
    let pendulum = &systems[3];
    let mut rows = Vec::new();
    for age in 1..=NMSE_CURVE_MAX_AGE {
        let mut row = vec![age.to_string()];
        for sys in &systems {
            row.push(format_value(nmse_of_age(sys, age)?));
        }
        row.push(format_value(mse_of_age(pendulum, age)));
        rows.push(row);
    }
    sink.write("nmse_vs_age.csv", &["age", "easy", "mid", "hard", "pendulum", "pendulum_raw_mse"], rows)?;
    Ok(sink.written.remove(0))
}

/// Writes the theory comparison table.
pub fn write_validation(report: &ValidationReport, dir: &Path) -> Result<PathBuf> {
    let mut sink = Sink::new(dir)?;
    let rows = report.rows.iter().map(|r| {
        vec![
            r.policy.label(),
            r.n.to_string(),
            r.policy.to_string(),
            format_value(r.simulated),
            opt(r.half_width),
            format_value(r.theory),
            format_value(r.rel_error),
            format_value(r.tolerance),
            r.pass.to_string(),
            r.beats_sa.map(|b| b.to_string()).unwrap_or_default(),
        ]
    });
    sink.write(
        "validation.csv",
        &[
            "protocol", "N", "parameters", "simulated_aoi", "ci99_half_width", "theory_aoi", "rel_error", "tolerance",
            "pass", "beats_slotted_aloha",
        ],
        rows,
    )?;
    Ok(sink.written.remove(0))
}

/// Writes the pendulum verdicts, per-class nMSE box data and the φ/ξ
/// envelopes.
pub fn write_pendulum(report: &PendulumReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut sink = Sink::new(dir)?;

    let loops = report.cases.iter().flat_map(|c| {
        c.loops.iter().map(move |l| {
            vec![
                c.label(),
                l.loop_id.to_string(),
                format_value(l.peak_phi_deg),
                format_value(l.peak_xi),
                format_value(l.mean_aoi),
                format_value(l.mean_nmse),
                l.diverged.to_string(),
                l.stabilized.to_string(),
                l.aoi_monotone.to_string(),
            ]
        })
    });
    sink.write(
        "pendulum_loops.csv",
        &[
            "protocol", "loop_id", "peak_abs_phi_deg", "peak_abs_xi", "mean_aoi", "mean_nmse", "diverged", "stabilized",
            "aoi_running_mean_monotone",
        ],
        loops,
    )?;

    let mut boxes = Vec::new();
    for c in &report.cases {
        for (r, run) in c.reps.runs.iter().enumerate() {
            for l in &run.metrics.loops {
                boxes.push(vec![
                    c.label(),
                    l.class.clone(),
                    r.to_string(),
                    l.loop_id.to_string(),
                    format_value(l.mean_nmse),
                ]);
            }
        }
    }
    sink.write("nmse_box.csv", &["protocol", "class", "run_id", "loop_id", "mean_nmse"], boxes)?;

    let mut env_rows = Vec::new();
    for c in &report.cases {
        for e in &c.envelopes {
            for k in 0..e.phi_min_deg.len() {
                env_rows.push(vec![
                    c.label(),
                    e.loop_id.to_string(),
                    k.to_string(),
                    format_value(k as f64 * report.sampling_period),
                    format_value(e.phi_min_deg[k]),
                    format_value(e.phi_mean_deg[k]),
                    format_value(e.phi_max_deg[k]),
                    format_value(e.xi_min[k]),
                    format_value(e.xi_mean[k]),
                    format_value(e.xi_max[k]),
                ]);
            }
        }
    }
    sink.write(
        "pendulum_envelope.csv",
        &[
            "protocol", "loop_id", "step", "time_s", "phi_min_deg", "phi_mean_deg", "phi_max_deg", "xi_min", "xi_mean",
            "xi_max",
        ],
        env_rows,
    )?;
    Ok(sink.written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{parse_str, run_experiment, Scenario};

    #[test]
    fn non_finite_values_print_as_inf() {
        assert_eq!(format_value(f64::INFINITY), "inf");
        assert_eq!(format_value(f64::NAN), "inf");
        assert_eq!(format_value(0.25), "0.25");
    }

    #[test]
    fn nmse_curves_start_at_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_nmse_curves(dir.path()).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "age,easy,mid,hard,pendulum,pendulum_raw_mse");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&first[..5], &["1", "1", "1", "1", "1"]);
        assert_eq!(text.lines().count(), NMSE_CURVE_MAX_AGE as usize + 1);
    }

    #[test]
    fn emitted_files_are_byte_identical_across_reruns() {
        let doc = "protocols = [\"rr\", \"sa\"]\nn_range = [3, 4]\nreplications = 2\nduration_s = 12.0\n";
        let spec = parse_str(doc, Some(Scenario::Sweep)).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = emit_results(&run_experiment(&spec, Some(2)).unwrap(), a.path()).unwrap();
        let pb = emit_results(&run_experiment(&spec, Some(1)).unwrap(), b.path()).unwrap();
        assert_eq!(pa.len(), 7);
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
        let summary = fs::read_to_string(a.path().join("summary.csv")).unwrap();
        let rr_rows = summary.lines().filter(|l| l.starts_with("round_robin,") && l.contains(",mean_aoi,")).count();
        assert_eq!(rr_rows, 2);
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let err = write_nmse_curves(&file.path().join("sub")).unwrap_err();
        assert!(matches!(err, crate::Error::Io(_)), "{err}");
    }
}
