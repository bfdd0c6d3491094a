//! Marker-aware rendering of token sequences into executable strings.
//!
//! Tokens are joined with single spaces unless a boundary is marked on both
//! sides with the `<ns>` adjacency marker: `["ls", "-l<ns>", "<ns>a<ns>",
//! "<ns>T 32"]` renders as `ls -laT 32`. A marker on only one side of a
//! boundary renders as a normal spaced join. A bare `<ns>` token glues both
//! of its neighbours and contributes no text. Markers never appear in the
//! rendered string.
//!
//! The row separator `;` is special-cased so that command rows join flush
//! against the previous row (`cd /h; df -a`), matching how shells print
//! sequenced commands.

use std::ops::Range;

/// Adjacency marker recognised at token edges.
pub const NOSPACE: &str = "<ns>";

/// Separator token injected between command rows that are not already joined
/// by an explicit connector.
pub const ROW_SEPARATOR: &str = ";";

/// Connector tokens that start a command row and bind it to the previous row
/// with spaces on both sides.
pub const CONNECTORS: &[&str] = &["&&", "||", "|", ">", ">>"];

/// Returns true for tokens that begin a connector-led row.
pub fn is_connector(token: &str) -> bool {
    CONNECTORS.contains(&token)
}

/// Separator token preceding `row` when command rows are joined into one
/// input string: the first row has none, and later rows either supply their
/// own leading connector or get a `;`.
pub fn row_separator(index: usize, row: &[String]) -> Option<&'static str> {
    if index == 0 || row.first().map_or(false, |t| is_connector(t)) {
        None
    } else {
        Some(ROW_SEPARATOR)
    }
}

/// Splits a token into its marker flags and the marker-free text. Repeated
/// edge markers collapse into a single flag; interior markers are left as
/// literal text.
pub fn strip_markers(token: &str) -> (bool, &str, bool) {
    let mut text = token;
    let mut lead = false;
    let mut trail = false;
    while let Some(rest) = text.strip_prefix(NOSPACE) {
        lead = true;
        text = rest;
    }
    while let Some(rest) = text.strip_suffix(NOSPACE) {
        trail = true;
        text = rest;
    }
    (lead, text, trail)
}

/// A rendered token sequence plus the byte span each token's marker-free
/// text occupies in it. Tokens that contribute no text (bare markers, empty
/// strings) get an empty span at their join point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub spans: Vec<Range<usize>>,
}

/// Joins tokens with marker-aware spacing; see the module docs for the rules.
pub fn join_tokens<I, S>(tokens: I) -> Rendered
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    let mut spans = Vec::new();
    let mut emitted_any = false;
    let mut prev_trail = false;
    let mut glue = false;

    for token in tokens {
        let token = token.as_ref();
        if token == ROW_SEPARATOR {
            // Flush against the previous token, spaced before the next.
            let start = out.len();
            out.push(';');
            spans.push(start..out.len());
            emitted_any = true;
            prev_trail = false;
            glue = false;
            continue;
        }
        let (lead, text, trail) = strip_markers(token);
        if text.is_empty() {
            // A bare marker glues both neighbours; a plain empty token is
            // skipped without affecting the boundary.
            if lead || trail {
                glue = true;
            }
            spans.push(out.len()..out.len());
            continue;
        }
        let tight = glue || (prev_trail && lead);
        if emitted_any && !tight {
            out.push(' ');
        }
        let start = out.len();
        out.push_str(text);
        spans.push(start..out.len());
        emitted_any = true;
        prev_trail = trail;
        glue = false;
    }

    Rendered { text: out, spans }
}

/// Assembles one argument string from the terminal texts of a completed
/// derivation. Interior markers are resolved here; a marker facing outward at
/// either edge is kept on the returned string so the argument can still glue
/// to its neighbours when the session row is rendered.
pub fn assemble_argument<'a, I>(tokens: I) -> String
where
    I: IntoIterator<Item = &'a str> + Clone,
{
    let joined = join_tokens(tokens.clone()).text;
    if joined.is_empty() {
        return String::new();
    }
    let mut lead = false;
    for token in tokens.clone() {
        let (l, text, t) = strip_markers(token);
        if text.is_empty() {
            lead |= l || t;
            continue;
        }
        lead |= l;
        break;
    }
    let mut trail = false;
    let all: Vec<&str> = tokens.into_iter().collect();
    for token in all.iter().rev() {
        let (l, text, t) = strip_markers(token);
        if text.is_empty() {
            trail |= l || t;
            continue;
        }
        trail |= t;
        break;
    }
    let mut arg = String::new();
    if lead {
        arg.push_str(NOSPACE);
    }
    arg.push_str(&joined);
    if trail {
        arg.push_str(NOSPACE);
    }
    arg
}
