//! ARFF reader for binary multi-label datasets (dense and sparse rows),
//! following the Mulan convention that the trailing attributes are labels.

use ndarray::Array2;

use super::DataError;

/// Binary feature matrix plus binary label matrix with attribute names.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiLabelDataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
}

impl MultiLabelDataset {
    pub fn examples(&self) -> usize {
        self.x.nrows()
    }

    pub fn features(&self) -> usize {
        self.x.ncols()
    }

    pub fn labels(&self) -> usize {
        self.y.ncols()
    }

    pub fn to_dataset(&self) -> super::Dataset {
        super::Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
        }
    }
}

fn err(line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        msg: msg.into(),
    }
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    if (s.starts_with('\'') && s.ends_with('\'') && s.len() >= 2)
        || (s.starts_with('"') && s.ends_with('"') && s.len() >= 2)
    {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

fn parse_binary(token: &str, line: usize) -> Result<f64, DataError> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| err(line, format!("unparseable value '{}'", token.trim())))?;
    if v == 0.0 || v == 1.0 {
        Ok(v)
    } else {
        Err(err(line, format!("non-binary value {v}")))
    }
}

/// Checks that a nominal domain is exactly {0,1} (order-insensitive).
fn check_nominal(domain: &str, line: usize) -> Result<(), DataError> {
    let inner = domain
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| err(line, "malformed nominal domain"))?;
    let mut values: Vec<&str> = inner.split(',').map(|v| v.trim()).collect();
    values.sort_unstable();
    if values == ["0", "1"] {
        Ok(())
    } else {
        Err(err(line, format!("non-binary nominal domain {{{inner}}}")))
    }
}

/// Parses ARFF text whose last `label_count` attributes are the labels.
/// Dense rows are comma-separated; sparse rows are `{index value, ...}` with
/// 0-based attribute indices and implicit zeros.
pub fn arff_parse(text: &str, label_count: usize) -> Result<MultiLabelDataset, DataError> {
    let mut names: Vec<String> = Vec::new();
    let mut data_start: Option<usize> = None;
    let mut line_count = 0usize;

    let lines: Vec<&str> = text.lines().collect();
    for (i, raw) in lines.iter().enumerate() {
        line_count = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            continue;
        }
        if lower.starts_with("@attribute") {
            let rest = line["@attribute".len()..].trim();
            // Name token (possibly quoted), then the type.
            let (name, ty) = if rest.starts_with('\'') || rest.starts_with('"') {
                let quote = rest.chars().next().expect("nonempty");
                let end = rest[1..]
                    .find(quote)
                    .ok_or_else(|| err(line_count, "unterminated attribute name"))?;
                (&rest[..end + 2], rest[end + 2..].trim())
            } else {
                match rest.split_once(char::is_whitespace) {
                    Some((n, t)) => (n, t.trim()),
                    None => return Err(err(line_count, "attribute without a type")),
                }
            };
            let tyl = ty.to_ascii_lowercase();
            if ty.starts_with('{') {
                check_nominal(ty, line_count)?;
            } else if !matches!(tyl.as_str(), "numeric" | "real" | "integer") {
                return Err(err(line_count, format!("unsupported attribute type '{ty}'")));
            }
            names.push(strip_quotes(name).to_string());
            continue;
        }
        if lower.starts_with("@data") {
            data_start = Some(i + 1);
            break;
        }
        return Err(err(line_count, format!("unexpected directive '{line}'")));
    }

    let data_start = data_start.ok_or_else(|| err(line_count, "missing @data header"))?;
    let attrs = names.len();
    if label_count == 0 || label_count > attrs {
        return Err(DataError::InvalidArgument(format!(
            "label_count {label_count} out of range for {attrs} attributes"
        )));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in lines.iter().enumerate().skip(data_start) {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut row = vec![0.0f64; attrs];
        if let Some(body) = line.strip_prefix('{') {
            let body = body
                .strip_suffix('}')
                .ok_or_else(|| err(lineno, "unterminated sparse row"))?;
            let body = body.trim();
            if !body.is_empty() {
                let mut seen = vec![false; attrs];
                for pair in body.split(',') {
                    let mut it = pair.split_whitespace();
                    let idx: usize = it
                        .next()
                        .ok_or_else(|| err(lineno, "empty sparse entry"))?
                        .parse()
                        .map_err(|_| err(lineno, "unparseable sparse index"))?;
                    let val = it
                        .next()
                        .ok_or_else(|| err(lineno, "sparse entry without a value"))?;
                    if it.next().is_some() {
                        return Err(err(lineno, "sparse entry with trailing tokens"));
                    }
                    if idx >= attrs {
                        return Err(err(
                            lineno,
                            format!("index {idx} out of range for {attrs} attributes"),
                        ));
                    }
                    if seen[idx] {
                        return Err(err(lineno, format!("duplicate sparse index {idx}")));
                    }
                    seen[idx] = true;
                    row[idx] = parse_binary(val, lineno)?;
                }
            }
        } else {
            let values: Vec<&str> = line.split(',').collect();
            if values.len() != attrs {
                return Err(err(
                    lineno,
                    format!("expected {attrs} values, found {}", values.len()),
                ));
            }
            for (j, v) in values.iter().enumerate() {
                row[j] = parse_binary(v, lineno)?;
            }
        }
        rows.push(row);
    }

    let features = attrs - label_count;
    let n = rows.len();
    let mut x = Array2::zeros((n, features));
    let mut y = Array2::zeros((n, label_count));
    for (r, row) in rows.iter().enumerate() {
        for c in 0..features {
            x[(r, c)] = row[c];
        }
        for c in 0..label_count {
            y[(r, c)] = row[features + c];
        }
    }
    Ok(MultiLabelDataset {
        x,
        y,
        feature_names: names[..features].to_vec(),
        label_names: names[features..].to_vec(),
    })
}

/// Serializes a dataset back to dense ARFF; `arff_parse` of the output
/// reproduces the matrices exactly.
pub fn write_arff(data: &MultiLabelDataset, relation: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("@relation {relation}\n\n"));
    for name in data.feature_names.iter().chain(data.label_names.iter()) {
        out.push_str(&format!("@attribute {name} {{0,1}}\n"));
    }
    out.push_str("\n@data\n");
    for r in 0..data.examples() {
        let mut fields: Vec<String> = Vec::with_capacity(data.features() + data.labels());
        for c in 0..data.features() {
            fields.push(format!("{}", data.x[(r, c)] as u8));
        }
        for c in 0..data.labels() {
            fields.push(format!("{}", data.y[(r, c)] as u8));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
