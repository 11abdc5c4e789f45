//! Deterministic report assembly: a fixed-width text table and a CSV record
//! per analysis, both newline-terminated. Re-running the same program yields
//! byte-identical output.

use crate::ast::Options;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub analysis: String,
    pub args: Vec<String>,
    pub horizon: String,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub options: Options,
    pub rows: Vec<Row>,
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# psilab report\n");
        out.push_str(&format!(
            "# option horizon={} prefix={} seed={}\n",
            self.options.horizon, self.options.prefix, self.options.seed
        ));
        let args: Vec<String> = self.rows.iter().map(|r| r.args.join(" ")).collect();
        let w_analysis = width("analysis", self.rows.iter().map(|r| r.analysis.as_str()));
        let w_args = width("args", args.iter().map(String::as_str));
        let w_horizon = width("horizon", self.rows.iter().map(|r| r.horizon.as_str()));
        out.push_str(&format!(
            "{:w0$}  {:w1$}  {:w2$}  result\n",
            "analysis",
            "args",
            "horizon",
            w0 = w_analysis,
            w1 = w_args,
            w2 = w_horizon
        ));
        for (row, args) in self.rows.iter().zip(&args) {
            out.push_str(&format!(
                "{:w0$}  {:w1$}  {:w2$}  {}\n",
                row.analysis,
                args,
                row.horizon,
                row.result,
                w0 = w_analysis,
                w1 = w_args,
                w2 = w_horizon
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let mut fields = vec![row.analysis.clone()];
            fields.extend(row.args.iter().cloned());
            fields.push(row.horizon.clone());
            fields.push(row.result.clone());
            let quoted: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
            out.push_str(&quoted.join(","));
            out.push('\n');
        }
        out
    }
}

fn width<'a>(header: &str, values: impl Iterator<Item = &'a str>) -> usize {
    values
        .map(str::len)
        .chain(std::iter::once(header.len()))
        .max()
        .unwrap_or(0)
}

fn csv_field(f: &str) -> String {
    if f.contains(',') || f.contains('"') || f.contains('\n') {
        format!("\"{}\"", f.replace('"', "\"\""))
    } else {
        f.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_fields_with_commas() {
        let report = Report {
            options: Options::default(),
            rows: vec![Row {
                analysis: "spectrum".into(),
                args: vec!["F".into()],
                horizon: "256".into(),
                result: "{2,4} exact".into(),
            }],
        };
        assert_eq!(report.to_csv(), "spectrum,F,256,\"{2,4} exact\"\n");
    }

    #[test]
    fn text_is_newline_terminated() {
        let report = Report {
            options: Options::default(),
            rows: vec![],
        };
        let text = report.to_text();
        assert!(text.ends_with('\n'));
    }
}
