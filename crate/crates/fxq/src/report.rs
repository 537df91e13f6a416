//! CSV reports with a schema header, and the text files the CLI reads back
//! (statistics, plans).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use fxq_core::engine::QuantizationPlan;
use fxq_core::{QFormat, SqnrDb, TensorStats};

pub const SCHEMA_LINE: &str = "# schema=1";

/// A CSV document: schema line, optional `#` comments, header, rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Csv {
    pub comments: Vec<String>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&'static str]) -> Self {
        Csv {
            header: header.to_vec(),
            ..Default::default()
        }
    }

    pub fn comment(&mut self, text: impl Into<String>) -> &mut Self {
        self.comments.push(text.into());
        self
    }

    pub fn row(&mut self, cells: Vec<String>) -> &mut Self {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(SCHEMA_LINE);
        out.push('\n');
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse a document produced by [`Csv::render`] into header-keyed rows.
    pub fn parse(text: &str) -> Result<Vec<BTreeMap<String, String>>, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(SCHEMA_LINE) => {}
            other => return Err(format!("expected `{SCHEMA_LINE}`, found {other:?}")),
        }
        let mut lines = lines.filter(|l| !l.starts_with('#'));
        let header: Vec<&str> = lines.next().ok_or("missing CSV header")?.split(',').collect();
        lines
            .enumerate()
            .map(|(i, l)| {
                let cells: Vec<&str> = l.split(',').collect();
                if cells.len() != header.len() {
                    return Err(format!("row {} has {} cells, header has {}", i + 1, cells.len(), header.len()));
                }
                Ok(header.iter().zip(cells).map(|(h, c)| (h.to_string(), c.to_string())).collect())
            })
            .collect()
    }
}

/// dB with two decimals, `inf` for a noiseless result.
pub fn db(v: SqnrDb) -> String {
    v.to_string()
}

pub fn stats_csv(stats: &BTreeMap<String, TensorStats>) -> Csv {
    let mut csv = Csv::new(&["tensor", "class", "count", "mean", "std_dev", "max_abs"]);
    for (key, s) in stats {
        csv.row(vec![
            key.clone(),
            tensor_class(key).into(),
            s.count.to_string(),
            s.mean.to_string(),
            s.std_dev.to_string(),
            s.max_abs.to_string(),
        ]);
    }
    csv
}

pub fn parse_stats(text: &str) -> Result<BTreeMap<String, TensorStats>, String> {
    let mut out = BTreeMap::new();
    for row in Csv::parse(text)? {
        let get = |k: &str| row.get(k).cloned().ok_or_else(|| format!("missing column `{k}`"));
        let num = |k: &str| -> Result<f64, String> { get(k)?.parse().map_err(|e| format!("column `{k}`: {e}")) };
        let count: u64 = get("count")?.parse().map_err(|e| format!("column `count`: {e}"))?;
        let s = TensorStats::new(count, num("mean")?, num("std_dev")?, num("max_abs")?).map_err(|e| e.to_string())?;
        out.insert(get("tensor")?, s);
    }
    Ok(out)
}

/// `input`, `weight`, `bias` or `activation`, from the tensor key.
pub fn tensor_class(key: &str) -> &'static str {
    if key == fxq_core::engine::INPUT_KEY {
        "input"
    } else if key.ends_with(".weight") {
        "weight"
    } else if key.ends_with(".bias") {
        "bias"
    } else {
        "activation"
    }
}

/// Plan file: one `tensor Qβ.n` line per format.
pub fn render_plan(plan: &QuantizationPlan, notes: &[String]) -> String {
    use fxq_core::engine::{act_key, bias_key, weight_key, INPUT_KEY};
    let mut entries: Vec<(String, QFormat)> = Vec::new();
    if let Some(f) = plan.input {
        entries.push((INPUT_KEY.into(), f));
    }
    for (layer, f) in &plan.weights {
        entries.push((weight_key(layer), *f));
    }
    for (layer, f) in &plan.biases {
        entries.push((bias_key(layer), *f));
    }
    for (layer, f) in &plan.activations {
        entries.push((act_key(layer), *f));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::from(SCHEMA_LINE);
    out.push('\n');
    for n in notes {
        let _ = writeln!(out, "# {n}");
    }
    for (k, f) in entries {
        let _ = writeln!(out, "{k} {f}");
    }
    out
}

pub fn parse_plan(text: &str) -> Result<QuantizationPlan, String> {
    let mut plan = QuantizationPlan::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, fmt) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| format!("line {}: expected `tensor Qβ.n`", i + 1))?;
        let fmt: QFormat = fmt.trim().parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        if key == fxq_core::engine::INPUT_KEY {
            plan.input = Some(fmt);
        } else if let Some(l) = key.strip_suffix(".weight") {
            plan.weights.insert(l.into(), fmt);
        } else if let Some(l) = key.strip_suffix(".bias") {
            plan.biases.insert(l.into(), fmt);
        } else if let Some(l) = key.strip_suffix(".act") {
            plan.activations.insert(l.into(), fmt);
        } else {
            return Err(format!("line {}: unknown tensor key `{key}`", i + 1));
        }
    }
    Ok(plan)
}
