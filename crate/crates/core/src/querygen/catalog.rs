//! Parses the LaTeX `tabular` listing returned by the discovery prompt.
//! The catalog is informational; only the built-in connectors are executed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub domain: String,
    pub name: String,
    pub description: String,
    pub has_api: Option<bool>,
    pub link: Option<String>,
    pub license: Option<String>,
}

/// Every data row of every `tabular` environment in `text`. Header rows
/// (first cell "Domain") and rows with fewer than six cells are skipped.
pub fn parse_catalog(text: &str) -> Vec<CatalogEntry> {
    let mut entries = Vec::new();
    let mut rest = text;
    while let Some(begin) = rest.find("\\begin{tabular}") {
        let body = &rest[begin + "\\begin{tabular}".len()..];
        let end = body.find("\\end{tabular}").unwrap_or(body.len());
        let table = skip_column_spec(&body[..end]);
        for row in table.split("\\\\") {
            if let Some(entry) = parse_row(row) {
                entries.push(entry);
            }
        }
        rest = &body[end..];
    }
    entries
}

/// Drops duplicates by case-insensitive name, keeping the first.
pub fn merge_catalog(entries: Vec<CatalogEntry>) -> Vec<CatalogEntry> {
    let mut seen = std::collections::HashSet::new();
    entries
        .into_iter()
        .filter(|e| seen.insert(e.name.to_lowercase()))
        .collect()
}

fn skip_column_spec(table: &str) -> &str {
    let trimmed = table.trim_start();
    if !trimmed.starts_with('{') {
        return trimmed;
    }
    let mut depth = 0;
    for (i, c) in trimmed.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return &trimmed[i + 1..];
                }
            }
            _ => {}
        }
    }
    ""
}

fn parse_row(row: &str) -> Option<CatalogEntry> {
    let mut row = row.trim();
    for rule in ["\\hline", "\\toprule", "\\midrule", "\\bottomrule"] {
        row = row.trim_start_matches(rule).trim();
    }
    let cells = split_cells(row);
    if cells.len() < 6 {
        return None;
    }
    let cells: Vec<String> = cells.iter().map(|c| clean_cell(c)).collect();
    if cells[0].eq_ignore_ascii_case("domain") || cells[1].is_empty() {
        return None;
    }
    let optional = |s: &String| (!s.is_empty() && s != "-").then(|| s.clone());
    let has_api = match cells[3].to_ascii_lowercase().as_str() {
        "yes" | "y" | "true" => Some(true),
        "no" | "n" | "false" => Some(false),
        _ => None,
    };
    Some(CatalogEntry {
        domain: cells[0].clone(),
        name: cells[1].clone(),
        description: cells[2].clone(),
        has_api,
        link: optional(&cells[4]),
        license: optional(&cells[5]),
    })
}

fn split_cells(row: &str) -> Vec<&str> {
    let mut cells = Vec::new();
    let mut start = 0;
    let bytes = row.as_bytes();
    for i in 0..bytes.len() {
        if bytes[i] == b'&' && (i == 0 || bytes[i - 1] != b'\\') {
            cells.push(&row[start..i]);
            start = i + 1;
        }
    }
    cells.push(&row[start..]);
    cells
}

fn clean_cell(cell: &str) -> String {
    let mut s = cell.trim().to_string();
    // \href{url}{text} and \url{x} keep the URL
    for cmd in ["\\href{", "\\url{"] {
        if let Some(pos) = s.find(cmd) {
            let after = &s[pos + cmd.len()..];
            if let Some(close) = after.find('}') {
                s = after[..close].to_string();
            }
        }
    }
    for cmd in ["\\textbf{", "\\textit{", "\\texttt{", "\\emph{"] {
        while let Some(pos) = s.find(cmd) {
            s.replace_range(pos..pos + cmd.len(), "");
            if let Some(close) = s[pos..].find('}') {
                s.remove(pos + close);
            }
        }
    }
    s.replace("\\&", "&")
        .replace("\\_", "_")
        .replace("\\%", "%")
        .trim()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let text = r"Sure!
\begin{tabular}{|l|l|p{4cm}|c|l|l|}
\hline
Domain & Name of dataset & Description & API (yes/no) & Link & Licence \\
\hline
Economics & FRED & US macro \& financial series & Yes & \url{https://fred.stlouisfed.org} & Public domain \\
Energy & \textbf{EIA Open Data} & Electricity data & yes & \href{https://www.eia.gov/opendata}{EIA} & \\
\hline
\end{tabular}";
        let entries = parse_catalog(text);
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].description, "US macro & financial series");
        assert_eq!(entries[0].link.as_deref(), Some("https://fred.stlouisfed.org"));
        assert_eq!(entries[1].name, "EIA Open Data");
        assert_eq!(entries[1].link.as_deref(), Some("https://www.eia.gov/opendata"));
        assert_eq!(entries[1].license, None);
        assert_eq!(entries[1].has_api, Some(true));
    }
}
