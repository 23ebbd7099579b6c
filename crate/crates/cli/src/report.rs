//! Plain-text summaries and SVG accuracy plots of finished runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pointmanifold::training::MetricsReport;
use pointmanifold::Error;

use crate::commands::{ABLATION_FILE, EPOCHS_FILE, METRICS_FILE};
use crate::CliError;

pub const SUMMARY_FILE: &str = "summary.txt";
pub const PLOT_FILE: &str = "accuracy.svg";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_oa: f64,
    pub test_ma: f64,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| {
        CliError::Lib(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn format_error(path: &Path, line: usize, message: &str) -> CliError {
    CliError::Lib(Error::Format(format!(
        "{}:{line}: {message}",
        path.display()
    )))
}

/// Parses a CSV with a header into rows of named fields.
fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = read(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| format_error(path, 1, "empty file"))?
        .split(',')
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<String> = line.split(',').map(String::from).collect();
        if row.len() != header.len() {
            return Err(format_error(
                path,
                i + 2,
                &format!("expected {} fields, got {}", header.len(), row.len()),
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn load_epochs(path: &Path) -> Result<Vec<EpochRow>, CliError> {
    let (header, rows) = parse_csv(path)?;
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format_error(path, 1, &format!("missing column '{name}'")))
    };
    let (e, l, oa, ma) = (
        column("epoch")?,
        column("train_loss")?,
        column("test_oa")?,
        column("test_ma")?,
    );
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let num = |c: usize| {
                r[c].parse::<f64>()
                    .map_err(|_| format_error(path, i + 2, &format!("bad number '{}'", r[c])))
            };
            Ok(EpochRow {
                epoch: num(e)? as usize,
                train_loss: num(l)?,
                test_oa: num(oa)?,
                test_ma: num(ma)?,
            })
        })
        .collect()
}

/// Text-only line plot of test oA and mA against epoch.
pub fn accuracy_svg(rows: &[EpochRow]) -> String {
    let (w, h, margin) = (640.0, 400.0, 50.0);
    let last = rows.iter().map(|r| r.epoch).max().unwrap_or(0).max(1) as f64;
    let x = |epoch: usize| margin + (w - 2.0 * margin) * epoch as f64 / last;
    let y = |acc: f64| h - margin - (h - 2.0 * margin) * acc.clamp(0.0, 1.0);
    let polyline = |get: &dyn Fn(&EpochRow) -> f64, colour: &str| {
        let points: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.1},{:.1}", x(r.epoch), y(get(r))))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        )
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        svg,
        "<path d=\"M{m},{m} V{b} H{r}\" fill=\"none\" stroke=\"black\"/>",
        m = margin,
        b = h - margin,
        r = w - margin
    );
    for tick in 0..=4 {
        let acc = tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{acc:.2}</text>",
            margin - 6.0,
            y(acc) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">epoch</text>",
        w / 2.0,
        h - 12.0
    );
    svg.push_str(&polyline(&|r| r.test_oa, "#1f77b4"));
    svg.push_str(&polyline(&|r| r.test_ma, "#d62728"));
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"30\" font-size=\"12\" fill=\"#1f77b4\">test oA</text>\n\
         <text x=\"{:.1}\" y=\"30\" font-size=\"12\" fill=\"#d62728\">test mA</text>",
        margin + 10.0,
        margin + 80.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn run_summary(dir: &Path, out: &mut String) -> Result<Option<Vec<EpochRow>>, CliError> {
    let metrics_path = dir.join(METRICS_FILE);
    let epochs_path = dir.join(EPOCHS_FILE);
    let mut epochs = None;
    if epochs_path.exists() {
        let rows = load_epochs(&epochs_path)?;
        if let Some(best) = rows.iter().fold(None::<&EpochRow>, |b, r| match b {
            Some(b) if b.test_oa >= r.test_oa => Some(b),
            _ => Some(r),
        }) {
            let _ = writeln!(out, "epochs: {}", rows.len());
            let _ = writeln!(
                out,
                "best epoch: {} (test oA {:.4}, mA {:.4})",
                best.epoch, best.test_oa, best.test_ma
            );
            if let Some(last) = rows.last() {
                let _ = writeln!(out, "final train loss: {:.4}", last.train_loss);
            }
        }
        epochs = Some(rows);
    }
    if metrics_path.exists() {
        let metrics = MetricsReport::from_json(&read(&metrics_path)?)?;
        let _ = writeln!(out, "oA: {:.4}", metrics.oa);
        let _ = writeln!(out, "mA: {:.4}", metrics.ma);
        let _ = writeln!(out, "\nclass  precision  recall  f1      support");
        let p = &metrics.per_class;
        for c in 0..p.support.len() {
            let _ = writeln!(
                out,
                "{c:<6} {:<10.4} {:<7.4} {:<7.4} {}",
                p.precision[c], p.recall[c], p.f1[c], p.support[c]
            );
        }
    }
    Ok(epochs)
}

fn ablation_summary(path: &Path, out: &mut String) -> Result<(), CliError> {
    let (header, rows) = parse_csv(path)?;
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let _ = writeln!(out, "{}", line(&header));
    for r in &rows {
        let _ = writeln!(out, "{}", line(r));
    }
    Ok(())
}

/// Writes `summary.txt` (and `accuracy.svg` when asked) into `dir` and
/// prints the summary.
pub fn report(dir: &Path, svg: bool) -> Result<(), CliError> {
    let mut out = format!("run: {}\n", dir.display());
    let ablation = dir.join(ABLATION_FILE);
    let has_run = dir.join(METRICS_FILE).exists() || dir.join(EPOCHS_FILE).exists();
    if !has_run && !ablation.exists() {
        return Err(CliError::Lib(Error::InvalidInput(format!(
            "{} contains no {METRICS_FILE}, {EPOCHS_FILE} or {ABLATION_FILE}",
            dir.display()
        ))));
    }
    let epochs = run_summary(dir, &mut out)?;
    if ablation.exists() {
        ablation_summary(&ablation, &mut out)?;
    }
    fs::write(dir.join(SUMMARY_FILE), &out).map_err(|e| {
        CliError::Lib(Error::Io {
            path: dir.join(SUMMARY_FILE),
            source: e,
        })
    })?;
    if svg {
        let rows = epochs.ok_or_else(|| {
            CliError::Lib(Error::InvalidInput(format!(
                "{} has no {EPOCHS_FILE} to plot",
                dir.display()
            )))
        })?;
        let path = dir.join(PLOT_FILE);
        fs::write(&path, accuracy_svg(&rows))
            .map_err(|e| CliError::Lib(Error::Io { path, source: e }))?;
    }
    print!("{out}");
    Ok(())
}
