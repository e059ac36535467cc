//! Convergence tables as CSV and Markdown.
//!
//! CSV rows are `k,component,error,order,diverged`, one per step and
//! component, with floats in shortest round-trip form so parsing recovers the
//! records bit for bit. Markdown cells show three significant digits with the
//! observed order in parentheses; diverged cells show `--`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ivp::ConvergenceRecord;

pub const CSV_HEADER: &str = "k,component,error,order,diverged";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn float_field(x: f64) -> String {
    if x.is_nan() { String::new() } else { format!("{x:e}") }
}

/// Serializes one method's table.
pub fn to_csv(records: &[ConvergenceRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        for (c, e) in r.errors.iter().enumerate() {
            let order = r.orders.as_ref().and_then(|o| o[c]).map(float_field).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", float_field(r.step), c, float_field(*e), order, r.diverged);
        }
    }
    out
}

/// Parses the output of [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ConvergenceRecord>, ReportError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(ReportError::Parse { line: 1, reason: format!("expected header `{CSV_HEADER}`") }),
    }
    let mut records: Vec<ConvergenceRecord> = Vec::new();
    let mut orders: Vec<Option<f64>> = Vec::new();
    let finish = |records: &mut Vec<ConvergenceRecord>, orders: &mut Vec<Option<f64>>| {
        // only the first record of a table lacks orders
        let first = records.len() == 1;
        if let Some(r) = records.last_mut() {
            r.orders = if first { None } else { Some(std::mem::take(orders)) };
        }
        orders.clear();
    };
    for (idx, line) in lines {
        let lineno = idx + 1;
        let err = |reason: &str| ReportError::Parse { line: lineno, reason: reason.to_string() };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        let num = |s: &str| -> Result<f64, ReportError> {
            if s.is_empty() { Ok(f64::NAN) } else { s.parse().map_err(|_| err("bad number")) }
        };
        let step = num(fields[0])?;
        let component: usize = fields[1].parse().map_err(|_| err("bad component index"))?;
        let error = num(fields[2])?;
        let order = if fields[3].is_empty() { None } else { Some(num(fields[3])?) };
        let diverged: bool = fields[4].parse().map_err(|_| err("bad diverged flag"))?;
        if component == 0 {
            finish(&mut records, &mut orders);
            records.push(ConvergenceRecord { step, errors: Vec::new(), orders: None, diverged });
        }
        let current = records.last_mut().ok_or_else(|| err("component 0 must come first"))?;
        if component != current.errors.len() || current.step.to_bits() != step.to_bits() {
            return Err(err("components out of order"));
        }
        current.errors.push(error);
        orders.push(order);
    }
    finish(&mut records, &mut orders);
    Ok(records)
}

/// How the step column of a Markdown table is labelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepColumn {
    /// Step size `k`.
    Step,
    /// Step count `N = T/k`.
    Count { t_end: f64 },
}

/// `1.16e-9 (5.49)`, `0.548 `, or `--`.
pub fn format_cell(error: f64, order: Option<f64>, diverged: bool) -> String {
    if diverged || !error.is_finite() {
        return "--".into();
    }
    let base = format!("{error:.2e}");
    match order {
        Some(p) => format!("{base} ({p:.2})"),
        None => base,
    }
}

/// One Markdown table with a column per (method, component).
pub fn markdown_table(
    methods: &[(String, Vec<ConvergenceRecord>)],
    components: &[String],
    step_column: StepColumn,
) -> String {
    let mut out = String::new();
    let step_label = match step_column {
        StepColumn::Step => "k",
        StepColumn::Count { .. } => "N",
    };
    let mut header = vec![step_label.to_string()];
    for (name, _) in methods {
        if components.len() <= 1 {
            header.push(name.clone());
        } else {
            header.extend(components.iter().map(|c| format!("{name} {c}")));
        }
    }
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    let rows = methods.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    for i in 0..rows {
        let step = methods.iter().find_map(|(_, r)| r.get(i).map(|r| r.step)).unwrap_or(f64::NAN);
        let mut cells = vec![match step_column {
            StepColumn::Step => format!("{step:.3e}"),
            StepColumn::Count { t_end } => format!("{}", (t_end / step).round()),
        }];
        for (_, records) in methods {
            let width = components.len().max(1);
            match records.get(i) {
                Some(r) => {
                    for c in 0..width {
                        let order = r.orders.as_ref().and_then(|o| o.get(c).copied().flatten());
                        let e = r.errors.get(c).copied().unwrap_or(f64::NAN);
                        cells.push(format_cell(e, order, r.diverged));
                    }
                }
                None => cells.extend(std::iter::repeat_n(String::new(), width)),
            }
        }
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<ConvergenceRecord> {
        ConvergenceRecord::table(vec![
            (1e-3, Some(vec![4.40e-2, 0.1 + 0.2])),
            (1e-4, None),
            (1e-5, Some(vec![1.16e-9, f64::MIN_POSITIVE])),
            (5e-6, Some(vec![9.20e-12, 0.0])),
        ])
    }

    fn same(a: &[ConvergenceRecord], b: &[ConvergenceRecord]) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let obits = |o: &Option<Vec<Option<f64>>>| {
            o.as_ref().map(|v| v.iter().map(|x| x.map(f64::to_bits)).collect::<Vec<_>>())
        };
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.step.to_bits() == y.step.to_bits()
                    && bits(&x.errors) == bits(&y.errors)
                    && obits(&x.orders) == obits(&y.orders)
                    && x.diverged == y.diverged
            })
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let records = sample();
        let text = to_csv(&records);
        assert!(text.starts_with("k,component,error,order,diverged\n"));
        let back = parse_csv(&text).unwrap();
        assert!(same(&records, &back), "{text}\n{back:?}");
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv("k,component,error,order,diverged\n1e-3,1,2,,false\n").is_err());
        assert!(parse_csv("k,component,error,order,diverged\n1e-3,0,x,,false\n").is_err());
    }

    #[test]
    fn markdown_cells() {
        assert_eq!(format_cell(9.2e-12, Some(6.9812), false), "9.20e-12 (6.98)");
        assert_eq!(format_cell(0.54818, None, false), "5.48e-1");
        assert_eq!(format_cell(f64::NAN, None, true), "--");
        let md = markdown_table(
            &[("DC6RK2/4".into(), sample())],
            &["u1".into(), "u2".into()],
            StepColumn::Count { t_end: 10.0 },
        );
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines[0], "| N | DC6RK2/4 u1 | DC6RK2/4 u2 |");
        assert_eq!(lines[3], "| 100000 | -- | -- |");
        assert!(lines[5].contains("9.20e-12 (6.98)"));
    }
}
