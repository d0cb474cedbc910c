//! Flat `key = value` report formatting shared by the analysis modules.

use std::fmt::Write as _;

use nalgebra::DMatrix;

/// Formats with 12 significant digits, switching to exponent notation outside
/// `[1e-5, 1e12)`, with trailing zeros trimmed.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_owned()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

/// Ordered `key = value` lines.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct KeyValueReport {
    entries: Vec<(String, String)>,
}

impl KeyValueReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.entries.push((key.to_owned(), value.into()));
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, fmt12(value))
    }

    pub fn list(&mut self, key: &str, values: impl IntoIterator<Item = f64>) -> &mut Self {
        let joined = values.into_iter().map(fmt12).collect::<Vec<_>>().join(", ");
        self.text(key, joined)
    }

    /// Matrix rows separated by `;`.
    pub fn matrix(&mut self, key: &str, m: &DMatrix<f64>) -> &mut Self {
        let rows = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| fmt12(m[(i, j)])).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("; ");
        self.text(key, rows)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// CSV with columns `matrix,row,col,value`.
pub fn matrices_csv(named: &[(&str, &DMatrix<f64>)]) -> String {
    let mut out = String::from("matrix,row,col,value\n");
    for (name, m) in named {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let _ = writeln!(out, "{name},{},{},{}", i + 1, j + 1, fmt12(m[(i, j)]));
            }
        }
    }
    out
}
