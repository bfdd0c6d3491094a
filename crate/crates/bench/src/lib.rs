//! Deterministic fixtures shared by the pipeline benchmarks.

use cmdsynth_core::shellenv::Session;

/// Labeled session inputs of increasing size, preamble included, matching
/// what campaigns actually execute against the bundled corpus.
pub fn session_inputs() -> Vec<(&'static str, String)> {
    vec![
        ("short", "cd /home/ubuntu; pwd".to_string()),
        (
            "medium",
            "cd /home/ubuntu; ls -a text && cat notes.txt".to_string(),
        ),
        (
            "long",
            "cd /home/ubuntu; export MODE=debug; ls -a text scripts; \
             cat text/readme.txt text/todo.txt | true; echo alpha beta gamma"
                .to_string(),
        ),
    ]
}

/// A pair of same-length pseudo-outputs that disagree on roughly one
/// character in ten, cycling a fixed alphabet so the pair is reproducible.
pub fn output_pair(len: usize) -> (String, String) {
    let alphabet = b"abcdefgh \n";
    let mut a = String::with_capacity(len);
    let mut b = String::with_capacity(len);
    for i in 0..len {
        let c = alphabet[i % alphabet.len()] as char;
        a.push(c);
        b.push(if i % 10 == 3 { 'Z' } else { c });
    }
    (a, b)
}

/// A single-row echo session with `n` distinct word arguments, the shape
/// the scorer sees most often.
pub fn echo_session(n: usize) -> Session {
    let mut row = vec!["echo".to_string()];
    row.extend((0..n).map(|i| format!("word{i}")));
    Session::from_rows(vec![row])
}
