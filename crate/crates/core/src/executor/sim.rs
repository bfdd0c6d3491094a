//! Deterministic in-memory shell backend.
//!
//! Implements a small, fixed command table over a virtual filesystem seeded
//! from an [`FsManifest`]. The input language covers words separated by
//! whitespace, the sequencing operators `;`, `&&` and `||`, pipelines with
//! `|`, and output redirections `>` / `>>`. There is no quoting, no variable
//! expansion, and no globbing: every word is passed to commands literally
//! (`<` is an ordinary word character). Every execution starts from the
//! pristine context and leaves the backend untouched.
//!
//! Deterministic choices that differ from an interactive shell are
//! documented inline: combined output is ordered stdout-then-stderr per
//! pipeline stage, directory listings are one name per line, and a fixed
//! instruction budget stands in for wall-clock timeouts.

use std::collections::BTreeMap;

use super::{
    BackendCapabilities, ContextSnapshot, ExecError, ExecutionTrace, ExecutorBackend, FileKind,
    FileRecord, FsManifest, SnapshotSection, TIMEOUT_EXIT_CODE,
};

/// Maximum number of command stages a single input may execute. Exceeding
/// it aborts the run with [`TIMEOUT_EXIT_CODE`], mirroring how a wall-clock
/// backend would kill a runaway script.
pub const INSTRUCTION_BUDGET: u64 = 4096;

const SIM_SECTIONS: &[SnapshotSection] = &[
    SnapshotSection::Cwd,
    SnapshotSection::Env,
    SnapshotSection::Fs,
    SnapshotSection::Groups,
    SnapshotSection::ShellOpts,
    SnapshotSection::Limits,
    SnapshotSection::Firewall,
];

#[derive(Clone, Debug)]
struct VfsNode {
    kind: FileKind,
    owner: String,
    group: String,
    perms: String,
    /// Always empty for directories.
    content: String,
}

impl VfsNode {
    fn record(&self) -> FileRecord {
        match self.kind {
            FileKind::Dir => FileRecord::dir(&self.owner, &self.group, &self.perms),
            FileKind::File => FileRecord::file(&self.owner, &self.group, &self.perms, &self.content),
        }
    }

    fn is_dir(&self) -> bool {
        self.kind == FileKind::Dir
    }
}

type Vfs = BTreeMap<String, VfsNode>;

/// In-memory executor with snapshot/revert semantics.
pub struct SimBackend {
    pristine: ContextSnapshot,
    seed_vfs: Vfs,
    seed_cwd: String,
    seed_env: BTreeMap<String, String>,
    executions: u64,
}

impl SimBackend {
    pub fn new(manifest: &FsManifest) -> SimBackend {
        let mut vfs = Vfs::new();
        for entry in manifest.entries() {
            vfs.insert(
                entry.path.clone(),
                VfsNode {
                    kind: entry.kind,
                    owner: entry.owner.clone(),
                    group: entry.group.clone(),
                    perms: entry.perms.clone(),
                    content: entry.content.clone(),
                },
            );
        }
        let seed_cwd = if vfs.contains_key("/home/ubuntu") {
            "/home/ubuntu".to_string()
        } else {
            "/".to_string()
        };
        let mut seed_env = BTreeMap::new();
        for (k, v) in [
            ("EDITOR", "vi"),
            ("HOME", seed_cwd.as_str()),
            ("LANG", "C.UTF-8"),
            (
                "PATH",
                "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
            ),
            ("SHELL", "/bin/sh"),
            ("USER", "ubuntu"),
        ] {
            seed_env.insert(k.to_string(), v.to_string());
        }
        let mut shell_opts = BTreeMap::new();
        for (k, v) in [
            ("errexit", "off"),
            ("noclobber", "off"),
            ("pipefail", "off"),
            ("xtrace", "off"),
        ] {
            shell_opts.insert(k.to_string(), v.to_string());
        }
        let mut limits = BTreeMap::new();
        for (k, v) in [
            ("cpu_seconds", "unlimited"),
            ("max_files", "1024"),
            ("max_procs", "4096"),
        ] {
            limits.insert(k.to_string(), v.to_string());
        }
        let pristine = ContextSnapshot {
            cwd: seed_cwd.clone(),
            env: seed_env.clone(),
            fs: vfs.iter().map(|(p, n)| (p.clone(), n.record())).collect(),
            groups: vec!["ubuntu".to_string(), "users".to_string()],
            shell_opts,
            limits,
            firewall: Vec::new(),
        };
        SimBackend {
            pristine,
            seed_vfs: vfs,
            seed_cwd,
            seed_env,
            executions: 0,
        }
    }

    /// Backend over the filesystem tree bundled with the crate.
    pub fn bundled() -> SimBackend {
        SimBackend::new(&FsManifest::bundled())
    }
}

impl ExecutorBackend for SimBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            sections: SIM_SECTIONS,
            deterministic: true,
        }
    }

    fn pristine(&self) -> &ContextSnapshot {
        &self.pristine
    }

    fn execute(&mut self, input: &str) -> Result<ExecutionTrace, ExecError> {
        let mut state = ShellState {
            cwd: self.seed_cwd.clone(),
            env: self.seed_env.clone(),
            vfs: self.seed_vfs.clone(),
            instructions: 0,
        };
        let (output, exit_code) = match lex(input).and_then(parse) {
            Ok(items) => run_script(&mut state, &items),
            Err(SyntaxError::Near(tok)) => (
                format!("sh: syntax error near unexpected token `{tok}'\n"),
                2,
            ),
            Err(SyntaxError::Eof) => ("sh: syntax error: unexpected end of file\n".to_string(), 2),
        };
        let after = ContextSnapshot {
            cwd: state.cwd,
            env: state.env,
            fs: state
                .vfs
                .iter()
                .map(|(p, n)| (p.clone(), n.record()))
                .collect(),
            groups: self.pristine.groups.clone(),
            shell_opts: self.pristine.shell_opts.clone(),
            limits: self.pristine.limits.clone(),
            firewall: self.pristine.firewall.clone(),
        };
        self.executions += 1;
        Ok(ExecutionTrace {
            input: input.to_string(),
            output,
            exit_code,
            before: self.pristine.clone(),
            after,
        })
    }

    fn executions(&self) -> u64 {
        self.executions
    }
}

// ---------------------------------------------------------------------------
// Input language
// ---------------------------------------------------------------------------

#[derive(Debug, PartialEq)]
enum Tok {
    Word(String),
    Op(&'static str),
}

enum SyntaxError {
    /// Offending token text, reported sh-style.
    Near(String),
    Eof,
}

fn lex(input: &str) -> Result<Vec<Tok>, SyntaxError> {
    let mut toks = Vec::new();
    let bytes = input.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b';' => {
                toks.push(Tok::Op(";"));
                i += 1;
            }
            b'&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    toks.push(Tok::Op("&&"));
                    i += 2;
                } else {
                    // Background jobs are not part of the language.
                    return Err(SyntaxError::Near("&".to_string()));
                }
            }
            b'|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    toks.push(Tok::Op("||"));
                    i += 2;
                } else {
                    toks.push(Tok::Op("|"));
                    i += 1;
                }
            }
            b'>' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    toks.push(Tok::Op(">>"));
                    i += 2;
                } else {
                    toks.push(Tok::Op(">"));
                    i += 1;
                }
            }
            _ => {
                let start = i;
                while i < bytes.len() && !matches!(bytes[i], b' ' | b'\t' | b'\n' | b'\r' | b';' | b'&' | b'|' | b'>')
                {
                    i += 1;
                }
                toks.push(Tok::Word(input[start..i].to_string()));
            }
        }
    }
    Ok(toks)
}

/// Connector that introduces a pipeline within a script.
#[derive(Clone, Copy, Debug, PartialEq)]
enum SeqOp {
    Seq,
    And,
    Or,
}

#[derive(Debug)]
struct Redirect {
    target: String,
    append: bool,
}

#[derive(Debug, Default)]
struct Stage {
    words: Vec<String>,
    redirects: Vec<Redirect>,
}

#[derive(Debug)]
struct Pipeline {
    stages: Vec<Stage>,
}

fn parse(toks: Vec<Tok>) -> Result<Vec<(SeqOp, Pipeline)>, SyntaxError> {
    let mut items: Vec<(SeqOp, Pipeline)> = Vec::new();
    let mut pending_op = SeqOp::Seq;
    let mut needs_pipeline = false;
    let mut stages: Vec<Stage> = Vec::new();
    let mut stage: Option<Stage> = None;
    let mut iter = toks.into_iter().peekable();
    while let Some(tok) = iter.next() {
        match tok {
            Tok::Word(w) => stage.get_or_insert_with(Stage::default).words.push(w),
            Tok::Op(op @ (">" | ">>")) => {
                let target = match iter.next() {
                    Some(Tok::Word(w)) => w,
                    Some(Tok::Op(other)) => return Err(SyntaxError::Near(other.to_string())),
                    None => return Err(SyntaxError::Eof),
                };
                stage
                    .get_or_insert_with(Stage::default)
                    .redirects
                    .push(Redirect {
                        target,
                        append: op == ">>",
                    });
            }
            Tok::Op("|") => match stage.take() {
                Some(st) => stages.push(st),
                None => return Err(SyntaxError::Near("|".to_string())),
            },
            Tok::Op(op @ (";" | "&&" | "||")) => {
                match stage.take() {
                    Some(st) => stages.push(st),
                    None => return Err(SyntaxError::Near(op.to_string())),
                }
                items.push((
                    pending_op,
                    Pipeline {
                        stages: std::mem::take(&mut stages),
                    },
                ));
                pending_op = match op {
                    "&&" => SeqOp::And,
                    "||" => SeqOp::Or,
                    _ => SeqOp::Seq,
                };
                needs_pipeline = op != ";";
            }
            Tok::Op(_) => unreachable!("lexer emits only known operators"),
        }
    }
    match stage.take() {
        Some(st) => {
            stages.push(st);
            items.push((pending_op, Pipeline { stages }));
        }
        None => {
            if !stages.is_empty() || needs_pipeline {
                // Input ended after `|`, `&&` or `||`.
                return Err(SyntaxError::Eof);
            }
        }
    }
    Ok(items)
}

// ---------------------------------------------------------------------------
// Interpreter
// ---------------------------------------------------------------------------

struct ShellState {
    cwd: String,
    env: BTreeMap<String, String>,
    vfs: Vfs,
    instructions: u64,
}

/// Mutable view a single stage runs against. Pipelines hand each stage its
/// own cwd/env clone (subshell semantics) while sharing the filesystem.
struct StageCtx<'a> {
    cwd: &'a mut String,
    env: &'a mut BTreeMap<String, String>,
    vfs: &'a mut Vfs,
    instructions: &'a mut u64,
}

struct BudgetExhausted;

fn run_script(state: &mut ShellState, items: &[(SeqOp, Pipeline)]) -> (String, i32) {
    let mut out = String::new();
    let mut last_exit = 0i32;
    for (op, pipeline) in items {
        match op {
            SeqOp::And if last_exit != 0 => continue,
            SeqOp::Or if last_exit == 0 => continue,
            _ => {}
        }
        match run_pipeline(state, pipeline, &mut out) {
            Ok(code) => last_exit = code,
            Err(BudgetExhausted) => {
                out.push_str("sh: execution budget exceeded\n");
                return (out, TIMEOUT_EXIT_CODE);
            }
        }
    }
    (out, last_exit)
}

fn run_pipeline(
    state: &mut ShellState,
    pipeline: &Pipeline,
    out: &mut String,
) -> Result<i32, BudgetExhausted> {
    if pipeline.stages.len() == 1 {
        let mut ctx = StageCtx {
            cwd: &mut state.cwd,
            env: &mut state.env,
            vfs: &mut state.vfs,
            instructions: &mut state.instructions,
        };
        let (stdout, stderr, code) = run_stage(&mut ctx, &pipeline.stages[0], "")?;
        out.push_str(&stdout);
        out.push_str(&stderr);
        return Ok(code);
    }
    // All stages start from the same parent cwd/env; their mutations are
    // discarded, exactly as if each ran in a subshell. Filesystem effects
    // (redirects, file commands) persist.
    let base_cwd = state.cwd.clone();
    let base_env = state.env.clone();
    let mut carried = String::new();
    let mut code = 0;
    let last = pipeline.stages.len() - 1;
    for (i, stage) in pipeline.stages.iter().enumerate() {
        let mut cwd = base_cwd.clone();
        let mut env = base_env.clone();
        let mut ctx = StageCtx {
            cwd: &mut cwd,
            env: &mut env,
            vfs: &mut state.vfs,
            instructions: &mut state.instructions,
        };
        let (stdout, stderr, c) = run_stage(&mut ctx, stage, &carried)?;
        if i == last {
            out.push_str(&stdout);
            out.push_str(&stderr);
        } else {
            out.push_str(&stderr);
            carried = stdout;
        }
        code = c;
    }
    Ok(code)
}

/// Runs one stage. Returns (stdout that survived redirection, stderr, exit).
fn run_stage(
    ctx: &mut StageCtx,
    stage: &Stage,
    stdin: &str,
) -> Result<(String, String, i32), BudgetExhausted> {
    *ctx.instructions += 1;
    if *ctx.instructions > INSTRUCTION_BUDGET {
        return Err(BudgetExhausted);
    }
    // Redirections apply left to right; the last one receives stdout. An
    // earlier `>` still truncates its target even when a later one wins.
    let mut sink: Option<String> = None;
    for redirect in &stage.redirects {
        let abs = resolve(ctx.cwd, &redirect.target);
        if let Err(msg) = open_redirect(ctx.vfs, &abs, redirect.append) {
            return Ok((
                String::new(),
                format!("sh: {}: {}\n", redirect.target, msg),
                1,
            ));
        }
        sink = Some(abs);
    }
    if stage.words.is_empty() {
        // A bare redirection like `> file` creates the file and succeeds.
        return Ok((String::new(), String::new(), 0));
    }
    let (stdout, stderr, exit) = dispatch(ctx, &stage.words, stdin);
    match sink {
        Some(path) => {
            append_content(ctx.vfs, &path, &stdout);
            Ok((String::new(), stderr, exit))
        }
        None => Ok((stdout, stderr, exit)),
    }
}

/// Creates or truncates (`>`) / creates if missing (`>>`) a redirect target.
fn open_redirect(vfs: &mut Vfs, abs: &str, append: bool) -> Result<(), &'static str> {
    match vfs.get_mut(abs) {
        Some(node) if node.is_dir() => Err("Is a directory"),
        Some(node) => {
            if !append {
                node.content.clear();
            }
            Ok(())
        }
        None => match parent_dir(vfs, abs) {
            ParentState::Dir => {
                vfs.insert(abs.to_string(), new_file_node(String::new()));
                Ok(())
            }
            ParentState::File => Err("Not a directory"),
            ParentState::Missing => Err("No such file or directory"),
        },
    }
}

fn append_content(vfs: &mut Vfs, abs: &str, data: &str) {
    if let Some(node) = vfs.get_mut(abs) {
        node.content.push_str(data);
    }
}

fn new_file_node(content: String) -> VfsNode {
    VfsNode {
        kind: FileKind::File,
        owner: "ubuntu".to_string(),
        group: "ubuntu".to_string(),
        perms: "-rw-r--r--".to_string(),
        content,
    }
}

fn new_dir_node() -> VfsNode {
    VfsNode {
        kind: FileKind::Dir,
        owner: "ubuntu".to_string(),
        group: "ubuntu".to_string(),
        perms: "drwxr-xr-x".to_string(),
        content: String::new(),
    }
}

/// Absolute normalised form of `operand` relative to `cwd`; `.` and `..`
/// segments are resolved textually (`..` at the root stays at the root).
fn resolve(cwd: &str, operand: &str) -> String {
    let joined = if operand.starts_with('/') {
        operand.to_string()
    } else {
        format!("{cwd}/{operand}")
    };
    let mut segments: Vec<&str> = Vec::new();
    for seg in joined.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                segments.pop();
            }
            s => segments.push(s),
        }
    }
    if segments.is_empty() {
        "/".to_string()
    } else {
        format!("/{}", segments.join("/"))
    }
}

enum ParentState {
    Dir,
    File,
    Missing,
}

fn parent_dir(vfs: &Vfs, abs: &str) -> ParentState {
    let parent = match abs.rfind('/') {
        Some(0) => "/",
        Some(idx) => &abs[..idx],
        None => return ParentState::Missing,
    };
    match vfs.get(parent) {
        Some(node) if node.is_dir() => ParentState::Dir,
        Some(_) => ParentState::File,
        None => ParentState::Missing,
    }
}

/// Sorted child basenames of `dir` (assumed to exist).
fn children<'v>(vfs: &'v Vfs, dir: &str) -> Vec<&'v str> {
    let prefix = if dir == "/" {
        "/".to_string()
    } else {
        format!("{dir}/")
    };
    let mut names = Vec::new();
    for (path, _) in vfs.range(prefix.clone()..) {
        if !path.starts_with(&prefix) {
            break;
        }
        let rest = &path[prefix.len()..];
        if !rest.is_empty() && !rest.contains('/') {
            names.push(rest);
        }
    }
    names
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_option(arg: &str) -> bool {
    arg.len() > 1 && arg.starts_with('-')
}

/// First option-looking argument, reported as `invalid option -- 'c'`.
fn scan_options(cmd: &str, args: &[String]) -> Option<String> {
    for arg in args {
        if is_option(arg) {
            let c = arg.chars().nth(1).unwrap();
            return Some(format!("{cmd}: invalid option -- '{c}'\n"));
        }
    }
    None
}

fn dispatch(ctx: &mut StageCtx, words: &[String], stdin: &str) -> (String, String, i32) {
    let args = &words[1..];
    match words[0].as_str() {
        "true" => (String::new(), String::new(), 0),
        "false" => (String::new(), String::new(), 1),
        "pwd" => (format!("{}\n", ctx.cwd), String::new(), 0),
        "cd" => cmd_cd(ctx, args),
        "echo" => cmd_echo(args),
        "export" => cmd_export(ctx, args),
        "unset" => cmd_unset(ctx, args),
        "touch" => cmd_touch(ctx, args),
        "rm" => cmd_rm(ctx, args),
        "mkdir" => cmd_mkdir(ctx, args),
        "cat" => cmd_cat(ctx, args, stdin),
        "ls" => cmd_ls(ctx, args),
        other => (
            String::new(),
            format!("sh: {other}: command not found\n"),
            127,
        ),
    }
}

/// `cd` uses its first argument only; with none it goes to `$HOME`.
fn cmd_cd(ctx: &mut StageCtx, args: &[String]) -> (String, String, i32) {
    let target = match args.first() {
        Some(t) => t.clone(),
        None => ctx
            .env
            .get("HOME")
            .cloned()
            .unwrap_or_else(|| "/".to_string()),
    };
    let abs = resolve(ctx.cwd, &target);
    match ctx.vfs.get(&abs) {
        None => (
            String::new(),
            format!("sh: cd: {target}: No such file or directory\n"),
            1,
        ),
        Some(node) if !node.is_dir() => (
            String::new(),
            format!("sh: cd: {target}: Not a directory\n"),
            1,
        ),
        Some(_) => {
            *ctx.cwd = abs;
            (String::new(), String::new(), 0)
        }
    }
}

/// `echo` joins its arguments with single spaces. Leading `-n` flags
/// suppress the trailing newline; `-q` is accepted anywhere and ignored.
fn cmd_echo(args: &[String]) -> (String, String, i32) {
    let mut rest: Vec<&str> = args
        .iter()
        .filter(|a| a.as_str() != "-q")
        .map(|a| a.as_str())
        .collect();
    let mut newline = true;
    while rest.first() == Some(&"-n") {
        newline = false;
        rest.remove(0);
    }
    let mut stdout = rest.join(" ");
    if newline {
        stdout.push('\n');
    }
    (stdout, String::new(), 0)
}

/// `export NAME=VALUE` sets variables; a bare valid name is a no-op. With
/// no arguments it lists the environment.
fn cmd_export(ctx: &mut StageCtx, args: &[String]) -> (String, String, i32) {
    if args.is_empty() {
        let mut stdout = String::new();
        for (k, v) in ctx.env.iter() {
            stdout.push_str(&format!("export {k}=\"{v}\"\n"));
        }
        return (stdout, String::new(), 0);
    }
    let mut stderr = String::new();
    for arg in args {
        let (name, value) = match arg.split_once('=') {
            Some((n, v)) => (n, Some(v)),
            None => (arg.as_str(), None),
        };
        if !is_identifier(name) {
            stderr.push_str(&format!("sh: export: `{arg}': not a valid identifier\n"));
            continue;
        }
        if let Some(v) = value {
            ctx.env.insert(name.to_string(), v.to_string());
        }
    }
    let exit = if stderr.is_empty() { 0 } else { 1 };
    (String::new(), stderr, exit)
}

/// `unset` removes variables; absent names are silently accepted.
fn cmd_unset(ctx: &mut StageCtx, args: &[String]) -> (String, String, i32) {
    let mut stderr = String::new();
    for arg in args {
        if !is_identifier(arg) {
            stderr.push_str(&format!("sh: unset: `{arg}': not a valid identifier\n"));
        } else {
            ctx.env.remove(arg);
        }
    }
    let exit = if stderr.is_empty() { 0 } else { 1 };
    (String::new(), stderr, exit)
}

fn cmd_touch(ctx: &mut StageCtx, args: &[String]) -> (String, String, i32) {
    if args.is_empty() {
        return (
            String::new(),
            "touch: missing file operand\n".to_string(),
            1,
        );
    }
    if let Some(msg) = scan_options("touch", args) {
        return (String::new(), msg, 1);
    }
    let mut stderr = String::new();
    for operand in args {
        let abs = resolve(ctx.cwd, operand);
        if ctx.vfs.contains_key(&abs) {
            // Existing path: metadata-only update, nothing we track changes.
            continue;
        }
        match parent_dir(ctx.vfs, &abs) {
            ParentState::Dir => {
                ctx.vfs.insert(abs, new_file_node(String::new()));
            }
            ParentState::File => stderr.push_str(&format!(
                "touch: cannot touch '{operand}': Not a directory\n"
            )),
            ParentState::Missing => stderr.push_str(&format!(
                "touch: cannot touch '{operand}': No such file or directory\n"
            )),
        }
    }
    let exit = if stderr.is_empty() { 0 } else { 1 };
    (String::new(), stderr, exit)
}

fn cmd_rm(ctx: &mut StageCtx, args: &[String]) -> (String, String, i32) {
    if args.is_empty() {
        return (String::new(), "rm: missing operand\n".to_string(), 1);
    }
    if let Some(msg) = scan_options("rm", args) {
        return (String::new(), msg, 1);
    }
    let mut stderr = String::new();
    for operand in args {
        let abs = resolve(ctx.cwd, operand);
        match ctx.vfs.get(&abs) {
            None => stderr.push_str(&format!(
                "rm: cannot remove '{operand}': No such file or directory\n"
            )),
            Some(node) if node.is_dir() => {
                stderr.push_str(&format!("rm: cannot remove '{operand}': Is a directory\n"));
            }
            Some(_) => {
                ctx.vfs.remove(&abs);
            }
        }
    }
    let exit = if stderr.is_empty() { 0 } else { 1 };
    (String::new(), stderr, exit)
}

fn cmd_mkdir(ctx: &mut StageCtx, args: &[String]) -> (String, String, i32) {
    if args.is_empty() {
        return (String::new(), "mkdir: missing operand\n".to_string(), 1);
    }
    if let Some(msg) = scan_options("mkdir", args) {
        return (String::new(), msg, 1);
    }
    let mut stderr = String::new();
    for operand in args {
        let abs = resolve(ctx.cwd, operand);
        if ctx.vfs.contains_key(&abs) {
            stderr.push_str(&format!(
                "mkdir: cannot create directory '{operand}': File exists\n"
            ));
            continue;
        }
        match parent_dir(ctx.vfs, &abs) {
            ParentState::Dir => {
                ctx.vfs.insert(abs, new_dir_node());
            }
            ParentState::File => stderr.push_str(&format!(
                "mkdir: cannot create directory '{operand}': Not a directory\n"
            )),
            ParentState::Missing => stderr.push_str(&format!(
                "mkdir: cannot create directory '{operand}': No such file or directory\n"
            )),
        }
    }
    let exit = if stderr.is_empty() { 0 } else { 1 };
    (String::new(), stderr, exit)
}

/// `cat` concatenates file contents; with no operands it echoes stdin,
/// which is what makes it useful at the end of a pipeline.
fn cmd_cat(ctx: &mut StageCtx, args: &[String], stdin: &str) -> (String, String, i32) {
    if let Some(msg) = scan_options("cat", args) {
        return (String::new(), msg, 1);
    }
    if args.is_empty() {
        return (stdin.to_string(), String::new(), 0);
    }
    let mut stdout = String::new();
    let mut stderr = String::new();
    for operand in args {
        let abs = resolve(ctx.cwd, operand);
        match ctx.vfs.get(&abs) {
            None => stderr.push_str(&format!("cat: {operand}: No such file or directory\n")),
            Some(node) if node.is_dir() => {
                stderr.push_str(&format!("cat: {operand}: Is a directory\n"));
            }
            Some(node) => stdout.push_str(&node.content),
        }
    }
    let exit = if stderr.is_empty() { 0 } else { 1 };
    (stdout, stderr, exit)
}

/// `ls` prints one name per line, sorted bytewise. `-a` reveals dotfiles
/// (never `.`/`..`). Multiple operands get `name:` headers with blank lines
/// between blocks; file operands echo back as typed.
fn cmd_ls(ctx: &mut StageCtx, args: &[String]) -> (String, String, i32) {
    let mut all = false;
    let mut operands: Vec<&String> = Vec::new();
    for arg in args {
        if is_option(arg) {
            for c in arg.chars().skip(1) {
                if c == 'a' {
                    all = true;
                } else {
                    return (
                        String::new(),
                        format!(
                            "ls: invalid option -- '{c}'\nTry 'ls --help' for more information.\n"
                        ),
                        2,
                    );
                }
            }
        } else {
            operands.push(arg);
        }
    }
    let dot = ".".to_string();
    if operands.is_empty() {
        operands.push(&dot);
    }
    let multi = operands.len() > 1;
    let mut blocks: Vec<String> = Vec::new();
    let mut stderr = String::new();
    for operand in operands {
        let abs = resolve(ctx.cwd, operand);
        match ctx.vfs.get(&abs) {
            None => stderr.push_str(&format!(
                "ls: cannot access '{operand}': No such file or directory\n"
            )),
            Some(node) if !node.is_dir() => blocks.push(format!("{operand}\n")),
            Some(_) => {
                let mut block = if multi {
                    format!("{operand}:\n")
                } else {
                    String::new()
                };
                for name in children(ctx.vfs, &abs) {
                    if all || !name.starts_with('.') {
                        block.push_str(name);
                        block.push('\n');
                    }
                }
                blocks.push(block);
            }
        }
    }
    let exit = if stderr.is_empty() { 0 } else { 2 };
    (blocks.join("\n"), stderr, exit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(input: &str) -> ExecutionTrace {
        SimBackend::bundled().execute(input).unwrap()
    }

    #[test]
    fn executions_start_pristine_and_revert() {
        let mut backend = SimBackend::bundled();
        let t1 = backend.execute("touch ghost.txt").unwrap();
        assert_eq!(t1.exit_code, 0);
        assert!(t1.after.fs.contains_key("/home/ubuntu/ghost.txt"));
        let t2 = backend.execute("ls").unwrap();
        assert!(!t2.after.fs.contains_key("/home/ubuntu/ghost.txt"));
        assert_eq!(t2.before, *backend.pristine());
        assert_eq!(backend.executions(), 2);
    }

    #[test]
    fn identical_inputs_yield_identical_traces() {
        let a = run("echo hi; ls /etc && pwd");
        let b = run("echo hi; ls /etc && pwd");
        assert_eq!(a, b);
    }

    #[test]
    fn cd_changes_cwd_and_reports_errors() {
        let t = run("cd /tmp");
        assert_eq!(t.after.cwd, "/tmp");
        assert_eq!(t.exit_code, 0);

        let t = run("cd nowhere");
        assert_eq!(t.exit_code, 1);
        assert_eq!(t.output, "sh: cd: nowhere: No such file or directory\n");
        assert_eq!(t.after.cwd, "/home/ubuntu");

        let t = run("cd notes.txt");
        assert_eq!(t.output, "sh: cd: notes.txt: Not a directory\n");

        let t = run("cd");
        assert_eq!(t.after.cwd, "/home/ubuntu");
        assert_eq!(t.exit_code, 0);

        let t = run("cd /tmp; cd ..; pwd");
        assert_eq!(t.output, "/\n");
    }

    #[test]
    fn echo_flag_handling() {
        assert_eq!(run("echo hi").output, "hi\n");
        assert_eq!(run("echo -n hi").output, "hi");
        assert_eq!(run("echo -q hi").output, "hi\n");
        assert_eq!(run("echo -n -q hi").output, "hi");
        assert_eq!(run("echo hi -q there").output, "hi there\n");
        assert_eq!(run("echo hi -n").output, "hi -n\n");
        assert_eq!(run("echo").output, "\n");
        assert_eq!(run("echo -n").output, "");
    }

    #[test]
    fn unknown_commands_exit_127() {
        let t = run("frobnicate now");
        assert_eq!(t.exit_code, 127);
        assert_eq!(t.output, "sh: frobnicate: command not found\n");
    }

    #[test]
    fn syntax_errors_abort_the_whole_input() {
        let t = run("echo hi ;;");
        assert_eq!(t.exit_code, 2);
        assert_eq!(t.output, "sh: syntax error near unexpected token `;'\n");
        assert_eq!(t.after, t.before);

        let t = run("echo hi &");
        assert_eq!(t.output, "sh: syntax error near unexpected token `&'\n");

        let t = run("echo hi &&");
        assert_eq!(t.output, "sh: syntax error: unexpected end of file\n");

        let t = run("echo hi >");
        assert_eq!(t.output, "sh: syntax error: unexpected end of file\n");

        let t = run("; echo hi");
        assert_eq!(t.exit_code, 2);
    }

    #[test]
    fn connectors_short_circuit() {
        assert_eq!(run("false && echo yes").output, "");
        assert_eq!(run("false || echo yes").output, "yes\n");
        assert_eq!(run("true && echo yes").output, "yes\n");
        assert_eq!(run("true || echo yes").output, "");
        // `;` resets nothing: the skipped command leaves the previous exit.
        let t = run("false && echo a; echo b");
        assert_eq!(t.output, "b\n");
        assert_eq!(t.exit_code, 0);
    }

    #[test]
    fn pipelines_share_fs_but_isolate_cwd_and_env() {
        let t = run("cd /tmp | true; pwd");
        assert_eq!(t.output, "/home/ubuntu\n");

        let t = run("export A=1 | true; export");
        assert!(!t.output.contains("A=\"1\""));

        let t = run("touch piped.txt | true");
        assert!(t.after.fs.contains_key("/home/ubuntu/piped.txt"));

        let t = run("echo hi | cat");
        assert_eq!(t.output, "hi\n");

        let t = run("cat /etc/hostname | cat | cat");
        assert_eq!(t.output, "workbox\n");
    }

    #[test]
    fn pipeline_reports_last_stage_exit_and_stage_stderr() {
        let t = run("cat missing.txt | cat");
        assert_eq!(t.exit_code, 0);
        assert_eq!(t.output, "cat: missing.txt: No such file or directory\n");

        let t = run("echo hi | cat missing.txt");
        assert_eq!(t.exit_code, 1);
    }

    #[test]
    fn redirects_create_truncate_and_append() {
        let t = run("echo one > out.txt; cat out.txt");
        assert_eq!(t.output, "one\n");

        let t = run("echo one > out.txt; echo two > out.txt; cat out.txt");
        assert_eq!(t.output, "two\n");

        let t = run("echo one > out.txt; echo two >> out.txt; cat out.txt");
        assert_eq!(t.output, "one\ntwo\n");

        let t = run("> empty.txt; ls");
        assert!(t.output.contains("empty.txt\n"));
        assert_eq!(t.exit_code, 0);

        // Both targets are created; only the last receives the output.
        let t = run("echo hi > a.txt > b.txt; cat a.txt b.txt");
        assert_eq!(t.output, "hi\n");
        let rec = &t.after.fs["/home/ubuntu/a.txt"];
        assert_eq!(rec.size, 0);

        let t = run("echo hi > missing/out.txt");
        assert_eq!(t.exit_code, 1);
        assert_eq!(
            t.output,
            "sh: missing/out.txt: No such file or directory\n"
        );

        let t = run("echo hi > /tmp");
        assert_eq!(t.output, "sh: /tmp: Is a directory\n");

        // Redirected stdout stays out of the visible output.
        let t = run("ls > listing.txt");
        assert_eq!(t.output, "");
    }

    #[test]
    fn ls_sorts_hides_and_reveals() {
        let t = run("ls /home/ubuntu");
        assert_eq!(
            t.output,
            "archives\nimages\nnotes.txt\nscripts\ntext\n"
        );
        let t = run("ls -a /home/ubuntu");
        assert_eq!(
            t.output,
            ".bashrc\n.profile\narchives\nimages\nnotes.txt\nscripts\ntext\n"
        );
        let t = run("ls");
        assert!(t.output.starts_with("archives\n"));

        let t = run("ls notes.txt");
        assert_eq!(t.output, "notes.txt\n");

        let t = run("ls -z");
        assert_eq!(t.exit_code, 2);
        assert!(t.output.starts_with("ls: invalid option -- 'z'\n"));

        let t = run("ls scripts text");
        assert_eq!(
            t.output,
            "scripts:\nbackup.sh\ndeploy.sh\n\ntext:\nreadme.txt\ntodo.txt\n"
        );

        let t = run("ls ghost");
        assert_eq!(t.exit_code, 2);
        assert_eq!(
            t.output,
            "ls: cannot access 'ghost': No such file or directory\n"
        );
    }

    #[test]
    fn file_commands_report_per_operand_errors() {
        let t = run("touch a.txt ghost/b.txt c.txt");
        assert_eq!(t.exit_code, 1);
        assert_eq!(
            t.output,
            "touch: cannot touch 'ghost/b.txt': No such file or directory\n"
        );
        assert!(t.after.fs.contains_key("/home/ubuntu/a.txt"));
        assert!(t.after.fs.contains_key("/home/ubuntu/c.txt"));

        let t = run("rm notes.txt ghost.txt");
        assert_eq!(t.exit_code, 1);
        assert!(!t.after.fs.contains_key("/home/ubuntu/notes.txt"));

        let t = run("rm /tmp");
        assert_eq!(t.output, "rm: cannot remove '/tmp': Is a directory\n");

        let t = run("mkdir newdir newdir");
        assert_eq!(
            t.output,
            "mkdir: cannot create directory 'newdir': File exists\n"
        );
        assert!(t.after.fs.contains_key("/home/ubuntu/newdir"));

        let t = run("cat notes.txt /etc/hostname");
        assert_eq!(t.output, "pick up milk\nrotate the logs\nworkbox\n");

        let t = run("touch -x a.txt");
        assert_eq!(t.output, "touch: invalid option -- 'x'\n");
        assert_eq!(t.after, t.before);
    }

    #[test]
    fn export_and_unset_manage_the_environment() {
        let t = run("export TRACE=1");
        assert_eq!(t.after.env.get("TRACE"), Some(&"1".to_string()));
        assert_eq!(t.exit_code, 0);

        let t = run("export 9BAD=1");
        assert_eq!(t.exit_code, 1);
        assert_eq!(
            t.output,
            "sh: export: `9BAD=1': not a valid identifier\n"
        );

        let t = run("unset LANG");
        assert!(!t.after.env.contains_key("LANG"));

        let t = run("unset NOT_SET_ANYWHERE");
        assert_eq!(t.exit_code, 0);
        assert_eq!(t.after, t.before);

        let t = run("export");
        assert!(t.output.contains("export HOME=\"/home/ubuntu\"\n"));
    }

    #[test]
    fn instruction_budget_caps_runaway_inputs() {
        let long = vec!["true"; (INSTRUCTION_BUDGET + 1) as usize].join("; ");
        let t = run(&long);
        assert_eq!(t.exit_code, TIMEOUT_EXIT_CODE);
        assert!(t.output.ends_with("sh: execution budget exceeded\n"));
    }

    #[test]
    fn pwd_true_false_ignore_arguments() {
        assert_eq!(run("pwd -L extra").output, "/home/ubuntu\n");
        assert_eq!(run("true whatever").exit_code, 0);
        assert_eq!(run("false whatever").exit_code, 1);
    }
}
