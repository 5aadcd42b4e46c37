//! Tab-separated text tables read by the plotting scripts.

use std::path::Path;

use crate::artifact::write_atomic;
use crate::error::{CliError, CliResult};

pub const METRICS_HEADER: [&str; 7] = ["metric", "case", "size_label", "N", "loss_mode", "seed", "value"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub case: String,
    pub size_label: String,
    pub n: usize,
    pub loss_mode: String,
    pub seed: u64,
    pub value: f64,
}

/// A table with a header row; values are written with round-trip precision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        self.rows.push(row.into_iter().map(|s| s.to_string()).collect());
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut lines = text.lines();
        let header: Vec<String> =
            lines.next().ok_or_else(|| CliError::Data("empty table".into()))?.split('\t').map(String::from).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split('\t').map(String::from).collect();
            if row.len() != header.len() {
                return Err(CliError::Data(format!(
                    "row {} has {} fields, expected {}",
                    i + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, self.render().as_bytes())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

pub fn metrics_table(rows: &[MetricRow]) -> Table {
    let mut t = Table::new(&METRICS_HEADER);
    for r in rows {
        t.push([
            r.metric.clone(),
            r.case.clone(),
            r.size_label.clone(),
            r.n.to_string(),
            r.loss_mode.clone(),
            r.seed.to_string(),
            r.value.to_string(),
        ]);
    }
    t
}

fn field<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<T> {
    s.parse().map_err(|_| CliError::Data(format!("bad {what} {s:?}")))
}

pub fn parse_metrics(table: &Table) -> CliResult<Vec<MetricRow>> {
    if table.header != METRICS_HEADER {
        return Err(CliError::Data(format!("not a metrics table (header {:?})", table.header)));
    }
    table
        .rows
        .iter()
        .map(|r| {
            Ok(MetricRow {
                metric: r[0].clone(),
                case: r[1].clone(),
                size_label: r[2].clone(),
                n: field(&r[3], "N")?,
                loss_mode: r[4].clone(),
                seed: field(&r[5], "seed")?,
                value: field(&r[6], "value")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(metric: &str, value: f64) -> MetricRow {
        MetricRow {
            metric: metric.into(),
            case: "sis".into(),
            size_label: "30K".into(),
            n: 10_000,
            loss_mode: "asa".into(),
            seed: 2,
            value,
        }
    }

    #[test]
    fn metrics_round_trip() {
        let rows = vec![row("a", 0.1 + 0.2), row("b", 1e-300), row("c", f64::INFINITY), row("d", -0.0)];
        let text = metrics_table(&rows).render();
        assert!(text.starts_with("metric\tcase\tsize_label\tN\tloss_mode\tseed\tvalue\n"));
        let back = parse_metrics(&Table::parse(&text).unwrap()).unwrap();
        assert_eq!(back, rows);
        let nan = parse_metrics(&Table::parse(&metrics_table(&[row("e", f64::NAN)]).render()).unwrap()).unwrap();
        assert!(nan[0].value.is_nan());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(Table::parse("a\tb\n1\n").is_err());
        assert!(parse_metrics(&Table::parse("x\n1\n").unwrap()).is_err());
    }
}
