/// One `key=value` record on stderr. Values with spaces, quotes or `=` are quoted.
pub fn diag(pairs: &[(&str, &str)]) {
    eprintln!("{}", format_record(pairs));
}

pub fn format_record(pairs: &[(&str, &str)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| {
            if v.is_empty() || v.chars().any(|c| c.is_whitespace() || c == '"' || c == '=') {
                format!("{k}={v:?}")
            } else {
                format!("{k}={v}")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
