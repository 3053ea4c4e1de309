//! Gnuplot data and script stubs from CSV tables.

use std::collections::BTreeMap;

use crate::cli::PlotKind;
use crate::output::{CliError, CliResult};

/// Data file and script for one table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlotData {
    pub data: String,
    pub script: String,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn parse(csv_text: &str) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
        let header: Vec<String> = rdr.headers().map_err(|e| CliError::Config(e.to_string()))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CliError::Config(e.to_string()))?;
            let row: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            rows.push(row.map_err(|e| CliError::Config(format!("row {}: {e}", k + 1)))?);
        }
        Ok(Self { header, rows })
    }

    /// Index of `name`, or `MissingColumn` when absent or the table is empty.
    fn column(&self, name: &str) -> CliResult<usize> {
        let idx = self.header.iter().position(|h| h == name).ok_or_else(|| CliError::MissingColumn(name.into()))?;
        if self.rows.is_empty() {
            return Err(CliError::MissingColumn(name.into()));
        }
        Ok(idx)
    }
}

fn num(v: f64) -> String {
    format!("{v:.14e}")
}

/// Selects the columns of `kind` from a CSV table and formats them with 15
/// significant digits.
///
/// `loglog` needs `n` and `mean` and carries `stderr` when present;
/// `series` needs `n`, `m` and `value` and emits one data block per `n`.
pub fn emit_plot_data(csv_text: &str, kind: PlotKind, name: &str) -> CliResult<PlotData> {
    let table = Table::parse(csv_text)?;
    let dat = format!("{name}.dat");
    match kind {
        PlotKind::Loglog => {
            let (n, mean) = (table.column("n")?, table.column("mean")?);
            let se = table.header.iter().position(|h| h == "stderr");
            let mut data = String::from(if se.is_some() { "# n mean stderr\n" } else { "# n mean\n" });
            for r in &table.rows {
                data += &num(r[n]);
                data += " ";
                data += &num(r[mean]);
                if let Some(s) = se {
                    data += " ";
                    data += &num(r[s]);
                }
                data += "\n";
            }
            let plot = if se.is_some() { "using 1:2:3 with yerrorlines" } else { "using 1:2 with linespoints" };
            let script = format!(
                "set logscale xy\nset xlabel 'n'\nset ylabel 'mean'\nplot '{dat}' {plot} title '{name}'\n"
            );
            Ok(PlotData { data, script })
        }
        PlotKind::Series => {
            let (n, m, value) = (table.column("n")?, table.column("m")?, table.column("value")?);
            let mut blocks: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
            for r in &table.rows {
                blocks.entry(r[n].round() as i64).or_default().push((r[m], r[value]));
            }
            let mut data = String::new();
            for (k, (key, pts)) in blocks.iter().enumerate() {
                if k > 0 {
                    data += "\n\n";
                }
                data += &format!("# n = {key}\n");
                for (x, y) in pts {
                    data += &format!("{} {}\n", num(*x), num(*y));
                }
            }
            let curves: Vec<String> =
                blocks.keys().enumerate().map(|(i, key)| format!("'{dat}' index {i} using 1:2 with linespoints title 'n = {key}'")).collect();
            let script = format!("set logscale x 2\nset xlabel 'm'\nset ylabel 'value'\nplot {}\n", curves.join(", \\\n     "));
            Ok(PlotData { data, script })
        }
    }
}
