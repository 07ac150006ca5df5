use alloc::string::String;

/// Simple lowercase fold used for index keys, indicator phrases and features.
pub(crate) fn fold(text: &str) -> String {
    text.to_lowercase()
}

/// Case-folds and collapses internal whitespace runs to a single space.
pub(crate) fn canonical(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}
