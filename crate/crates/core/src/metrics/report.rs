//! Result tables rendered as JSON or aligned text with four decimals.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    /// Ordered (column, value) pairs.
    pub values: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    /// Free-form notes such as the averaging mode used.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            notes: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn row<K: Into<String>>(
        mut self,
        method: impl Into<String>,
        values: impl IntoIterator<Item = (K, f64)>,
    ) -> Self {
        self.rows.push(ReportRow {
            method: method.into(),
            values: values.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.values.is_empty())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = serde_json::Map::new();
                m.insert("method".into(), r.method.clone().into());
                for (k, v) in &r.values {
                    m.insert(k.clone(), serde_json::json!(round4(*v)));
                }
                serde_json::Value::Object(m)
            })
            .collect();
        serde_json::json!({
            "title": self.title,
            "notes": self.notes,
            "columns": self.columns(),
            "rows": rows,
        })
    }

    /// Inverse of [`Report::to_json`].
    pub fn from_json(v: &serde_json::Value) -> Option<Self> {
        let columns: Vec<&str> = v["columns"].as_array()?.iter().map(|c| c.as_str()).collect::<Option<_>>()?;
        let mut report = Self::new(v["title"].as_str()?);
        for n in v["notes"].as_array()? {
            report.notes.push(n.as_str()?.to_string());
        }
        for r in v["rows"].as_array()? {
            let values = columns
                .iter()
                .filter_map(|c| r.get(*c).and_then(|x| x.as_f64()).map(|x| (c.to_string(), x)))
                .collect();
            report.rows.push(ReportRow {
                method: r["method"].as_str()?.to_string(),
                values,
            });
        }
        Some(report)
    }

    /// Column names in first-seen order across rows.
    pub fn columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (k, _) in self.rows.iter().flat_map(|r| &r.values) {
            if !out.contains(&k.as_str()) {
                out.push(k);
            }
        }
        out
    }

    /// Aligned text table; columns are taken from the first row.
    pub fn to_table(&self) -> String {
        let columns: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.values.iter().map(|(k, _)| k.as_str()).collect())
            .unwrap_or_default();
        let method_w = self
            .rows
            .iter()
            .map(|r| r.method.chars().count())
            .chain(std::iter::once("Method".len()))
            .max()
            .unwrap_or(6);
        let col_w: Vec<usize> = columns.iter().map(|c| c.chars().count().max(6)).collect();

        let mut out = format!("{}\n", self.title);
        out.push_str(&format!("{:<method_w$}", "Method"));
        for (c, w) in columns.iter().zip(&col_w) {
            out.push_str(&format!(" {:>w$}", c, w = *w));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<method_w$}", r.method));
            for (i, w) in col_w.iter().enumerate() {
                match r.values.get(i) {
                    Some((_, v)) => out.push_str(&format!(" {:>w$.4}", v, w = *w)),
                    None => out.push_str(&format!(" {:>w$}", "-", w = *w)),
                }
            }
            out.push('\n');
        }
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        out
    }
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_row_uses_four_decimals() {
        let r = Report::new("Ranking").row(
            "leap-op1",
            [("Hits@1", 0.25), ("Hits@3", 0.5), ("Hits@10", 0.75)],
        );
        let t = r.to_table();
        let line = t.lines().nth(2).unwrap();
        let numbers: Vec<&str> = line.split_whitespace().skip(1).collect();
        assert_eq!(numbers.join(" "), "0.2500 0.5000 0.7500");
    }

    #[test]
    fn json_round_trip_keeps_column_order() {
        let r = Report::new("MEF").row("m", [("F1", 0.71), ("Recall", 0.87), ("Precision", 0.6)]);
        let text = serde_json::to_string(&r.to_json()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["rows"][0]["F1"], 0.71);
        let back: Report = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(Report::from_json(&v).unwrap(), r);
        assert_eq!(v["columns"], serde_json::json!(["F1", "Recall", "Precision"]));
    }
}
