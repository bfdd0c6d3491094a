//! Text format parser for grammar files.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use super::{Grammar, GrammarError, Production, Symbol};
use crate::render;

/// Maximum characters a terminal may carry once `<ns>` markers are stripped;
/// also the cap on emitted argument cells.
pub const TERMINAL_MAX_LEN: usize = 64;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Terminal(String),
    Marker,
    Define, // ::=
    Pipe,
    Directive(String), // %start etc.
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, line: usize) -> Lexer<'a> {
        Lexer { src: src.as_bytes(), pos: 0, line, col: 1 }
    }

    fn err(&self, msg: impl Into<String>) -> GrammarError {
        GrammarError::Syntax { line: self.line, col: self.col, msg: msg.into() }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.src.get(self.pos).copied();
        if b.is_some() {
            self.pos += 1;
            self.col += 1;
        }
        b
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<Option<(Tok, usize)>, GrammarError> {
        while matches!(self.peek(), Some(b' ') | Some(b'\t')) {
            self.bump();
        }
        let start_col = self.col;
        let b = match self.peek() {
            None | Some(b'#') => return Ok(None),
            Some(b) => b,
        };
        if b == b'"' {
            self.bump();
            let mut text = String::new();
            loop {
                match self.bump() {
                    None => return Err(self.err("unterminated terminal (missing closing quote)")),
                    Some(b'"') => break,
                    Some(b'\\') => match self.bump() {
                        Some(b'"') => text.push('"'),
                        Some(b'\\') => text.push('\\'),
                        other => {
                            return Err(self.err(format!(
                                "unsupported escape {:?} in terminal",
                                other.map(|c| c as char)
                            )))
                        }
                    },
                    Some(c) => text.push(c as char),
                }
            }
            return Ok(Some((Tok::Terminal(text), start_col)));
        }
        if b == b'<' {
            let rest = &self.src[self.pos..];
            if rest.starts_with(render::NOSPACE.as_bytes()) {
                for _ in 0..render::NOSPACE.len() {
                    self.bump();
                }
                return Ok(Some((Tok::Marker, start_col)));
            }
            return Err(self.err("`<` only starts the `<ns>` marker token"));
        }
        if b == b':' {
            let rest = &self.src[self.pos..];
            if rest.starts_with(b"::=") {
                for _ in 0..3 {
                    self.bump();
                }
                return Ok(Some((Tok::Define, start_col)));
            }
            return Err(self.err("stray `:` (expected `::=`)"));
        }
        if b == b'|' {
            self.bump();
            return Ok(Some((Tok::Pipe, start_col)));
        }
        if b == b'%' {
            self.bump();
            let word = self.bare_word();
            return Ok(Some((Tok::Directive(word), start_col)));
        }
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'/' || b == b'.' {
            let word = self.bare_word();
            return Ok(Some((Tok::Ident(word), start_col)));
        }
        Err(self.err(format!("unexpected character {:?}", b as char)))
    }

    /// Bare words cover nonterminal names and command names in directives.
    fn bare_word(&mut self) -> String {
        let mut word = String::new();
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'/' | b'.') {
                word.push(b as char);
                self.bump();
            } else {
                break;
            }
        }
        word
    }
}

fn tokenize(statement: &str, line: usize) -> Result<Vec<(Tok, usize)>, GrammarError> {
    let mut lexer = Lexer::new(statement, line);
    let mut toks = Vec::new();
    while let Some(tok) = lexer.next_token()? {
        toks.push(tok);
    }
    Ok(toks)
}

/// Splits source into statements: one per line, with unquoted `;` acting as
/// an additional statement separator. Comments run to end of line.
fn statements(source: &str) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for (i, raw_line) in source.lines().enumerate() {
        let line_no = i + 1;
        let mut piece = String::new();
        let mut in_quote = false;
        let mut escaped = false;
        let mut chars = raw_line.chars();
        loop {
            let c = match chars.next() {
                Some(c) => c,
                None => break,
            };
            if in_quote {
                piece.push(c);
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    in_quote = false;
                }
                continue;
            }
            match c {
                '#' => break,
                '"' => {
                    in_quote = true;
                    piece.push(c);
                }
                ';' => {
                    out.push((std::mem::take(&mut piece), line_no));
                }
                _ => piece.push(c),
            }
        }
        out.push((piece, line_no));
    }
    out.retain(|(s, _)| !s.trim().is_empty());
    out
}

pub(super) fn parse(source: &str) -> Result<Grammar, GrammarError> {
    let mut starts: BTreeMap<String, String> = BTreeMap::new();
    let mut productions: Vec<Production> = Vec::new();
    let mut terminals: BTreeSet<String> = BTreeSet::new();

    for (statement, line) in statements(source) {
        let toks = tokenize(&statement, line)?;
        if toks.is_empty() {
            continue;
        }
        let syntax = |col: usize, msg: String| GrammarError::Syntax { line, col, msg };

        match &toks[0].0 {
            Tok::Directive(name) if name == "start" => {
                let (command, nonterminal) = match (toks.get(1), toks.get(2)) {
                    (Some((Tok::Ident(c), _)), Some((Tok::Ident(n), _))) => (c.clone(), n.clone()),
                    _ => {
                        return Err(syntax(
                            toks[0].1,
                            "%start expects a command name and a nonterminal".into(),
                        ))
                    }
                };
                if toks.len() > 3 {
                    return Err(syntax(toks[3].1, "trailing tokens after %start directive".into()));
                }
                if starts.insert(command.clone(), nonterminal).is_some() {
                    return Err(syntax(toks[0].1, format!("duplicate %start for `{command}`")));
                }
            }
            Tok::Directive(name) => {
                return Err(syntax(toks[0].1, format!("unknown directive `%{name}`")));
            }
            Tok::Ident(lhs) => {
                match toks.get(1) {
                    Some((Tok::Define, _)) => {}
                    other => {
                        let col = other.map(|t| t.1).unwrap_or(toks[0].1);
                        return Err(syntax(col, format!("expected `::=` after `{lhs}`")));
                    }
                }
                let mut alternatives: Vec<Vec<Symbol>> = vec![Vec::new()];
                for (tok, col) in &toks[2..] {
                    match tok {
                        Tok::Pipe => alternatives.push(Vec::new()),
                        Tok::Ident(name) => alternatives
                            .last_mut()
                            .unwrap()
                            .push(Symbol::Nonterminal(name.clone())),
                        Tok::Terminal(text) => {
                            let stripped = render::strip_markers(text).1;
                            if stripped.chars().count() > TERMINAL_MAX_LEN {
                                return Err(GrammarError::TerminalTooLong {
                                    line,
                                    text: text.clone(),
                                    limit: TERMINAL_MAX_LEN,
                                });
                            }
                            terminals.insert(text.clone());
                            alternatives.last_mut().unwrap().push(Symbol::Terminal(text.clone()));
                        }
                        Tok::Marker => alternatives
                            .last_mut()
                            .unwrap()
                            .push(Symbol::Terminal(render::NOSPACE.to_string())),
                        Tok::Define => {
                            return Err(syntax(*col, "unexpected `::=` inside rule body".into()))
                        }
                        Tok::Directive(d) => {
                            return Err(syntax(*col, format!("unexpected directive `%{d}` in rule")))
                        }
                    }
                }
                for rhs in alternatives {
                    productions.push(Production { lhs: lhs.clone(), rhs });
                }
            }
            Tok::Terminal(_) | Tok::Marker | Tok::Pipe | Tok::Define => {
                return Err(syntax(toks[0].1, "statement must start with a rule name or %start".into()));
            }
        }
    }

    Grammar::assemble(starts, productions, terminals)
}

#[cfg(test)]
mod tests {
    use super::super::{Grammar, GrammarError};

    #[test]
    fn start_directives_map_commands() {
        let g = Grammar::parse("%start df args\nargs ::= \"-a\"\n").unwrap();
        assert_eq!(g.start_of("df"), Some("args"));
        assert_eq!(g.starts().len(), 1);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let g = Grammar::parse("# header\n\nargs ::= \"-a\" # trailing\n").unwrap();
        assert_eq!(g.productions().len(), 1);
    }

    #[test]
    fn alternatives_split_into_separate_productions() {
        let g = Grammar::parse(r#"f ::= "a" | "b" | "c""#).unwrap();
        assert_eq!(g.productions().len(), 3);
        assert_eq!(g.productions_of("f").len(), 3);
    }

    #[test]
    fn repeated_lhs_accumulates_productions() {
        let g = Grammar::parse("f ::= \"a\"\nf ::= \"b\"\n").unwrap();
        assert_eq!(g.productions_of("f").len(), 2);
    }

    #[test]
    fn escapes_in_terminals() {
        let g = Grammar::parse(r#"f ::= "say \"hi\" \\ back""#).unwrap();
        assert!(g.terminals().contains(r#"say "hi" \ back"#));
    }

    #[test]
    fn marker_token_becomes_a_bare_marker_terminal() {
        let g = Grammar::parse(r#"f ::= "a" <ns> "b""#).unwrap();
        let p = &g.productions()[0];
        assert_eq!(p.rhs.len(), 3);
    }

    #[test]
    fn epsilon_alternative_is_allowed() {
        let g = Grammar::parse(r#"f ::= | "a""#).unwrap();
        assert_eq!(g.productions_of("f").len(), 2);
        assert!(g.productions()[0].rhs.is_empty());
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = Grammar::parse("ok ::= \"a\"\nbad rule here\n").unwrap_err();
        match err {
            GrammarError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert!(col > 1);
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn unterminated_terminal_is_a_syntax_error() {
        assert!(matches!(
            Grammar::parse(r#"f ::= "oops"#),
            Err(GrammarError::Syntax { .. })
        ));
    }

    #[test]
    fn overlong_terminals_are_rejected() {
        let long = "x".repeat(65);
        let err = Grammar::parse(&format!("f ::= \"{long}\"")).unwrap_err();
        assert!(matches!(err, GrammarError::TerminalTooLong { .. }));
    }

    #[test]
    fn marker_edges_do_not_count_toward_terminal_length() {
        let long = "x".repeat(64);
        assert!(Grammar::parse(&format!("f ::= \"<ns>{long}<ns>\"")).is_ok());
    }

    #[test]
    fn duplicate_start_is_rejected() {
        let err = Grammar::parse("%start df a\n%start df b\na ::= \"x\"\nb ::= \"y\"\n").unwrap_err();
        assert!(matches!(err, GrammarError::Syntax { .. }));
    }

    #[test]
    fn start_must_reference_a_defined_nonterminal() {
        let err = Grammar::parse("%start df ghost\na ::= \"x\"\n").unwrap_err();
        assert!(matches!(err, GrammarError::UndefinedNonterminal { name } if name == "ghost"));
    }
}
