/// Continuation marker carried by non-final subword units.
pub const CONTINUATION: &str = "@@";

/// Joins subword units back into words.
///
/// A token ending in `@@` is glued to its successor with the marker removed; the
/// remaining tokens are separated by single spaces. A dangling marker on the last
/// token is dropped.
pub fn bpe_merge<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue = true;
    for tok in tokens {
        let tok = tok.as_ref();
        if !glue {
            out.push(' ');
        }
        match tok.strip_suffix(CONTINUATION) {
            Some(stem) => {
                out.push_str(stem);
                glue = true;
            }
            None => {
                out.push_str(tok);
                glue = false;
            }
        }
    }
    out
}
