//! Behavioral oracle for the simulated shell: pinned outputs, exit codes,
//! and context effects for each command-table row and for the shell's
//! sequencing, piping, and redirection semantics.

use cmdsynth_core::executor::sim::SimBackend;
use cmdsynth_core::{ExecutionTrace, ExecutorBackend};

fn run(input: &str) -> ExecutionTrace {
    SimBackend::bundled().execute(input).unwrap()
}

#[test]
fn echo_flag_and_word_table() {
    let cases: &[(&str, &str, i32)] = &[
        ("echo alpha beta", "alpha beta\n", 0),
        ("echo -n alpha", "alpha", 0),
        ("echo -n -n alpha", "alpha", 0),
        ("echo alpha -n", "alpha -n\n", 0),
        ("echo -q alpha", "alpha\n", 0),
        ("echo", "\n", 0),
        ("echo -n", "", 0),
    ];
    for (input, output, exit) in cases {
        let t = run(input);
        assert_eq!(&t.output, output, "{input}");
        assert_eq!(&t.exit_code, exit, "{input}");
    }
}

#[test]
fn listing_is_sorted_and_dotfiles_need_the_flag() {
    let t = run("ls");
    assert_eq!(t.output, "archives\nimages\nnotes.txt\nscripts\ntext\n");
    assert_eq!(t.exit_code, 0);

    let t = run("ls -a");
    assert_eq!(
        t.output,
        ".bashrc\n.profile\narchives\nimages\nnotes.txt\nscripts\ntext\n"
    );

    let t = run("ls text scripts");
    assert_eq!(
        t.output,
        "text:\nreadme.txt\ntodo.txt\n\nscripts:\nbackup.sh\ndeploy.sh\n"
    );

    let t = run("ls -z");
    assert_eq!(
        t.output,
        "ls: invalid option -- 'z'\nTry 'ls --help' for more information.\n"
    );
    assert_eq!(t.exit_code, 2);

    let t = run("ls nowhere");
    assert_eq!(t.output, "ls: cannot access 'nowhere': No such file or directory\n");
    assert_eq!(t.exit_code, 2);
}

#[test]
fn reading_files_concatenates_in_operand_order() {
    let t = run("cat /etc/hostname");
    assert_eq!(t.output, "workbox\n");
    let t = run("cat /etc/hostname notes.txt");
    assert_eq!(t.output, "workbox\npick up milk\nrotate the logs\n");
    let t = run("cat missing.txt /etc/hostname");
    assert_eq!(t.output, "workbox\ncat: missing.txt: No such file or directory\n");
    assert_eq!(t.exit_code, 1);
    let t = run("cat text");
    assert_eq!(t.output, "cat: text: Is a directory\n");
    assert_eq!(t.exit_code, 1);
}

#[test]
fn file_creation_and_removal_mutate_the_snapshot() {
    let t = run("touch fresh.txt");
    assert_eq!(t.exit_code, 0);
    assert!(t.after.fs.contains_key("/home/ubuntu/fresh.txt"));
    assert!(!t.before.fs.contains_key("/home/ubuntu/fresh.txt"));

    let t = run("touch notes.txt");
    assert_eq!(t.exit_code, 0);
    assert_eq!(t.before, t.after, "touching an existing file changes nothing tracked");

    let t = run("mkdir build && touch build/out.txt");
    assert!(t.after.fs.contains_key("/home/ubuntu/build"));
    assert!(t.after.fs.contains_key("/home/ubuntu/build/out.txt"));

    let t = run("mkdir text");
    assert_eq!(t.output, "mkdir: cannot create directory 'text': File exists\n");
    assert_eq!(t.exit_code, 1);

    let t = run("rm notes.txt");
    assert!(!t.after.fs.contains_key("/home/ubuntu/notes.txt"));
    let t = run("rm text");
    assert_eq!(t.output, "rm: cannot remove 'text': Is a directory\n");
    assert_eq!(t.exit_code, 1);
    let t = run("rm ghost.txt");
    assert_eq!(t.output, "rm: cannot remove 'ghost.txt': No such file or directory\n");
}

#[test]
fn environment_commands_round_trip() {
    let t = run("export BUILD_MODE=debug");
    assert_eq!(t.exit_code, 0);
    assert_eq!(t.after.env.get("BUILD_MODE").map(String::as_str), Some("debug"));

    let t = run("export BUILD_MODE");
    assert_eq!(t.before, t.after, "a bare valid name is a no-op");

    let t = run("export 9bad=1");
    assert_eq!(t.output, "sh: export: `9bad=1': not a valid identifier\n");
    assert_eq!(t.exit_code, 1);

    let t = run("unset HOME");
    assert!(!t.after.env.contains_key("HOME"));
    let t = run("unset NOT_SET_ANYWHERE");
    assert_eq!(t.before, t.after);
    assert_eq!(t.exit_code, 0);
}

#[test]
fn directory_changes_and_reports() {
    let t = run("cd /tmp");
    assert_eq!(t.after.cwd, "/tmp");
    let t = run("cd text");
    assert_eq!(t.after.cwd, "/home/ubuntu/text");
    let t = run("cd");
    assert_eq!(t.after.cwd, "/home/ubuntu", "bare cd goes home");
    let t = run("cd ..");
    assert_eq!(t.after.cwd, "/home");
    let t = run("cd /tmp extra-ignored");
    assert_eq!(t.after.cwd, "/tmp");
    assert_eq!(t.exit_code, 0);
}

#[test]
fn sequencing_operators_short_circuit() {
    assert_eq!(run("true && echo yes").output, "yes\n");
    assert_eq!(run("false && echo no").output, "");
    assert_eq!(run("false || echo yes").output, "yes\n");
    assert_eq!(run("true || echo no").output, "");
    assert_eq!(run("false; echo always").output, "always\n");
    let t = run("false; true");
    assert_eq!(t.exit_code, 0);
    let t = run("true; false");
    assert_eq!(t.exit_code, 1);
}

#[test]
fn pipelines_carry_stdout_and_isolate_stage_state() {
    assert_eq!(run("echo alpha | cat").output, "alpha\n");
    // Only the carried stdout reaches the next stage; stderr prints as it
    // happens.
    let t = run("cat ghost.txt | cat");
    assert_eq!(t.output, "cat: ghost.txt: No such file or directory\n");
    assert_eq!(t.exit_code, 0, "pipeline exit is the last stage's exit");
    // cwd/env mutations inside a pipeline stage are discarded.
    let t = run("cd /tmp | true");
    assert_eq!(t.after.cwd, "/home/ubuntu");
    let t = run("export LEAK=1 | true");
    assert!(!t.after.env.contains_key("LEAK"));
}

#[test]
fn redirects_write_files_instead_of_output() {
    let t = run("echo alpha > out.txt");
    assert_eq!(t.output, "");
    let node = t.after.fs.get("/home/ubuntu/out.txt").expect("created");
    assert_eq!(node.size, 6);

    let t = run("echo one > f.txt; echo two >> f.txt; cat f.txt");
    assert_eq!(t.output, "one\ntwo\n");
    let t = run("echo one > f.txt; echo two > f.txt; cat f.txt");
    assert_eq!(t.output, "two\n", "second truncating write wins");

    let t = run("echo hi > text");
    assert_eq!(t.output, "sh: text: Is a directory\n");
    assert_eq!(t.exit_code, 1);

    let t = run("echo hi > missing/f.txt");
    assert_eq!(t.output, "sh: missing/f.txt: No such file or directory\n");
}

#[test]
fn unknown_commands_and_syntax_errors_are_shaped_like_sh() {
    let t = run("df -h");
    assert_eq!(t.output, "sh: df: command not found\n");
    assert_eq!(t.exit_code, 127);

    let t = run("echo hi &");
    assert_eq!(t.output, "sh: syntax error near unexpected token `&'\n");
    assert_eq!(t.exit_code, 2);

    let t = run("echo hi &&");
    assert_eq!(t.output, "sh: syntax error: unexpected end of file\n");
    assert_eq!(t.exit_code, 2);
}

#[test]
fn every_execution_starts_from_the_pristine_context() {
    let mut backend = SimBackend::bundled();
    let wrecked = backend
        .execute("rm notes.txt; unset HOME; cd /tmp; touch /tmp/mark")
        .unwrap();
    assert!(wrecked.after.fs.contains_key("/tmp/mark"));
    let clean = backend.execute("pwd").unwrap();
    assert_eq!(clean.output, "/home/ubuntu\n");
    assert_eq!(clean.before, *backend.pristine());
    assert!(!clean.after.fs.contains_key("/tmp/mark"));
    assert_eq!(backend.executions(), 2);
}
