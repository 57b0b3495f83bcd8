/// Fixed punctuation normalization applied before dedup, BPE, and scoring.
///
/// Typographic double and single quotes become ASCII `"` and `'`, dashes
/// become `-`, the ellipsis character becomes `...`, every kind of whitespace
/// becomes a single ASCII space, and the result is trimmed. The function is
/// idempotent.
pub fn normalize_punctuation(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        let mapped: &str = match c {
            '„' | '“' | '”' | '‟' | '″' | '«' | '»' | '〝' | '〞' | '＂' => "\"",
            '‘' | '’' | '‚' | '‛' | '′' | '‹' | '›' => "'",
            '–' | '—' | '‒' | '―' | '−' => "-",
            '…' => "...",
            c if c.is_whitespace() => {
                pending_space = true;
                continue;
            }
            _ => {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(c);
                continue;
            }
        };
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push_str(mapped);
    }
    out
}
