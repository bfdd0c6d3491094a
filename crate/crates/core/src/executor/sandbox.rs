//! Disposable-tree backend that runs inputs under a real shell.
//!
//! Each execution copies a seed directory tree into a scratch location,
//! launches the configured shell there with a scrubbed environment, captures
//! combined stdout/stderr plus final cwd and environment via sidecar files,
//! snapshots the tree afterwards, and deletes the copy — so reverting is
//! just discarding the damage.
//!
//! Honest limitations, by design: paths are reported relative to the tree
//! root (the tree root is `/`), but the shell itself resolves absolute
//! paths against the *real* filesystem, so inputs should stick to relative
//! paths; an input that calls `exit` skips the cwd/env capture epilogue and
//! those sections fall back to their pristine values; shell bookkeeping
//! variables (`PWD`, `OLDPWD`, `SHLVL`, `_`) are dropped from env capture
//! because they hold per-run host paths; and only the `cwd`, `env` and `fs`
//! sections are populated. The backend declares itself non-deterministic —
//! timing, PIDs and host state can all leak into outputs.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use tempfile::TempDir;

use super::{
    content_hash, BackendCapabilities, ContextSnapshot, ExecError, ExecutionTrace,
    ExecutorBackend, FileKind, FileRecord, FsManifest, SnapshotSection, TIMEOUT_EXIT_CODE,
};

const SANDBOX_SECTIONS: &[SnapshotSection] = &[
    SnapshotSection::Cwd,
    SnapshotSection::Env,
    SnapshotSection::Fs,
];

/// How long to keep draining output after the shell has exited or been
/// killed, in case background children still hold the pipe.
const DRAIN_GRACE: Duration = Duration::from_millis(1000);

#[derive(Clone, Debug)]
pub struct SandboxConfig {
    /// Directory to copy as the execution tree. `None` materialises the
    /// bundled seed manifest instead.
    pub seed_tree: Option<PathBuf>,
    /// Shell binary used to run inputs.
    pub shell: PathBuf,
    /// Wall-clock budget per execution; overruns report exit code 124.
    pub timeout: Duration,
    /// Complete (scrubbed) environment the shell starts with.
    pub env: BTreeMap<String, String>,
}

impl Default for SandboxConfig {
    fn default() -> SandboxConfig {
        let mut env = BTreeMap::new();
        for (k, v) in [
            ("HOME", "/"),
            ("LANG", "C"),
            ("PATH", "/usr/local/bin:/usr/bin:/bin"),
            ("SHELL", "/bin/sh"),
        ] {
            env.insert(k.to_string(), v.to_string());
        }
        SandboxConfig {
            seed_tree: None,
            shell: PathBuf::from("/bin/sh"),
            timeout: Duration::from_secs(5),
            env,
        }
    }
}

pub struct SandboxBackend {
    config: SandboxConfig,
    /// Owns all scratch state; dropped (and deleted) with the backend.
    base: TempDir,
    seed: PathBuf,
    pristine: ContextSnapshot,
    executions: u64,
    runs: u64,
}

impl SandboxBackend {
    pub fn new(config: SandboxConfig) -> Result<SandboxBackend, ExecError> {
        if !cfg!(unix) {
            return Err(ExecError::Unavailable(
                "the sandbox backend requires a unix host".to_string(),
            ));
        }
        if config.timeout.is_zero() {
            return Err(ExecError::Unavailable(
                "sandbox timeout must be non-zero".to_string(),
            ));
        }
        if !config.shell.is_file() {
            return Err(ExecError::Unavailable(format!(
                "shell `{}` not found",
                config.shell.display()
            )));
        }
        let base = TempDir::new()?;
        let seed = base.path().join("seed");
        match &config.seed_tree {
            Some(src) => {
                if !src.is_dir() {
                    return Err(ExecError::Unavailable(format!(
                        "seed tree `{}` is not a directory",
                        src.display()
                    )));
                }
                copy_tree(src, &seed)?;
            }
            None => materialise_manifest(&FsManifest::bundled(), &seed)?,
        }
        let pristine = ContextSnapshot {
            cwd: "/".to_string(),
            env: config.env.clone(),
            fs: walk_tree(&seed)?,
            groups: Vec::new(),
            shell_opts: BTreeMap::new(),
            limits: BTreeMap::new(),
            firewall: Vec::new(),
        };
        Ok(SandboxBackend {
            config,
            base,
            seed,
            pristine,
            executions: 0,
            runs: 0,
        })
    }

    /// Sandbox over the bundled seed tree with default settings.
    pub fn bundled() -> Result<SandboxBackend, ExecError> {
        SandboxBackend::new(SandboxConfig::default())
    }
}

impl ExecutorBackend for SandboxBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            sections: SANDBOX_SECTIONS,
            deterministic: false,
        }
    }

    fn pristine(&self) -> &ContextSnapshot {
        &self.pristine
    }

    fn execute(&mut self, input: &str) -> Result<ExecutionTrace, ExecError> {
        self.runs += 1;
        let run_id = self.runs;
        let tree = self.base.path().join(format!("run-{run_id}"));
        let side = self.base.path().join(format!("side-{run_id}"));
        copy_tree(&self.seed, &tree)?;
        std::fs::create_dir(&side)?;

        let script_path = self.base.path().join(format!("script-{run_id}.sh"));
        let script = format!(
            "exec 2>&1\n{input}\n__rc=$?\npwd > '{side}/cwd'\nenv > '{side}/env'\nexit $__rc\n",
            side = side.display()
        );
        std::fs::write(&script_path, script)?;

        let (output, exit_code) = run_with_timeout(
            &self.config.shell,
            &script_path,
            &tree,
            &self.config.env,
            self.config.timeout,
        )?;

        let cwd = match std::fs::read_to_string(side.join("cwd")) {
            Ok(raw) => virtual_cwd(raw.trim_end_matches('\n'), &tree),
            Err(_) => self.pristine.cwd.clone(),
        };
        let env = match std::fs::read_to_string(side.join("env")) {
            Ok(raw) => parse_env_listing(&raw),
            Err(_) => self.pristine.env.clone(),
        };
        let after = ContextSnapshot {
            cwd,
            env,
            fs: walk_tree(&tree)?,
            groups: Vec::new(),
            shell_opts: BTreeMap::new(),
            limits: BTreeMap::new(),
            firewall: Vec::new(),
        };

        let _ = std::fs::remove_dir_all(&tree);
        let _ = std::fs::remove_dir_all(&side);
        let _ = std::fs::remove_file(&script_path);

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

/// Launches the shell in its own process group, drains combined output on a
/// helper thread, and kills the whole group on timeout.
fn run_with_timeout(
    shell: &Path,
    script: &Path,
    workdir: &Path,
    env: &BTreeMap<String, String>,
    timeout: Duration,
) -> Result<(String, i32), ExecError> {
    let mut command = Command::new(shell);
    command
        .arg(script)
        .current_dir(workdir)
        .env_clear()
        .envs(env)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        command.process_group(0);
    }
    let mut child = command.spawn()?;
    let pid = child.id();

    let mut stdout = child.stdout.take().expect("stdout was piped");
    let (tx, rx) = mpsc::channel::<String>();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        let _ = tx.send(String::from_utf8_lossy(&buf).into_owned());
    });

    // Poll for exit WITHOUT reaping (waitid + WNOWAIT): the group kill below
    // must happen while the child is un-reaped, because once it is reaped its
    // pid — and therefore the `-pid` process-group id — can be recycled by an
    // unrelated process, and a late group signal would hit innocent
    // bystanders.
    let deadline = Instant::now() + timeout;
    let mut timed_out = false;
    loop {
        if exited_unreaped(pid)? {
            break;
        }
        if Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        std::thread::sleep(Duration::from_millis(5));
    }

    // Whether it exited or overran, SIGKILL any group members still running
    // (background children of the script), then reap exactly once.
    kill_group(pid);
    if timed_out {
        let _ = child.kill();
    }
    let status = child.wait()?;

    // The reader finishes promptly now that every pipe writer is dead; the
    // grace bound only matters if something escaped the group entirely.
    let output = rx.recv_timeout(DRAIN_GRACE).unwrap_or_default();

    let exit_code = if timed_out {
        TIMEOUT_EXIT_CODE
    } else {
        status.code().unwrap_or(TIMEOUT_EXIT_CODE)
    };
    Ok((output, exit_code.clamp(0, 255)))
}

/// Reports whether `pid` has exited, while leaving it un-reaped so the pid
/// stays reserved (and the process-group id stays safe to signal).
#[cfg(unix)]
fn exited_unreaped(pid: u32) -> Result<bool, ExecError> {
    let mut info: libc::siginfo_t = unsafe { std::mem::zeroed() };
    let rc = unsafe {
        libc::waitid(
            libc::P_PID,
            pid as libc::id_t,
            &mut info,
            libc::WEXITED | libc::WNOWAIT | libc::WNOHANG,
        )
    };
    if rc == -1 {
        let err = std::io::Error::last_os_error();
        if err.raw_os_error() == Some(libc::EINTR) {
            return Ok(false);
        }
        return Err(err.into());
    }
    // POSIX: with WNOHANG and nothing ready, si_pid is left at zero.
    Ok(unsafe { info.si_pid() } != 0)
}

#[cfg(not(unix))]
fn exited_unreaped(_pid: u32) -> Result<bool, ExecError> {
    Err(ExecError::Unavailable(
        "sandbox backend requires a unix host".to_string(),
    ))
}

/// Best-effort SIGKILL to the child's process group via the kill(2) syscall.
/// Only callable while the group leader is un-reaped — see `run_with_timeout`.
fn kill_group(pid: u32) {
    #[cfg(unix)]
    unsafe {
        libc::kill(-(pid as i32), libc::SIGKILL);
    }
    #[cfg(not(unix))]
    let _ = pid;
}

/// Tree-relative view of the captured cwd: the tree root maps to `/`, and
/// locations outside the tree are reported as the real path.
fn virtual_cwd(real: &str, tree: &Path) -> String {
    let real_path = Path::new(real);
    match real_path.strip_prefix(tree) {
        Ok(rel) if rel.as_os_str().is_empty() => "/".to_string(),
        Ok(rel) => format!("/{}", rel.display()),
        Err(_) => real.to_string(),
    }
}

/// Variables the shell maintains for its own bookkeeping. They carry host
/// paths that differ on every run (the scratch copy lives somewhere new each
/// time), and cwd is already reported through its own snapshot section, so
/// they are dropped from env capture.
const SHELL_BOOKKEEPING_VARS: &[&str] = &["PWD", "OLDPWD", "SHLVL", "_"];

/// Parses `env(1)` output. Continuation lines (from multiline values) are
/// folded into the preceding variable; shell bookkeeping variables are
/// excluded.
fn parse_env_listing(raw: &str) -> BTreeMap<String, String> {
    let mut env = BTreeMap::new();
    let mut last: Option<String> = None;
    for line in raw.split('\n') {
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) if !key.is_empty() && !key.contains(char::is_whitespace) => {
                env.insert(key.to_string(), value.to_string());
                last = Some(key.to_string());
            }
            _ => {
                if let Some(key) = &last {
                    let entry: &mut String = env.get_mut(key).expect("continuation without key");
                    entry.push('\n');
                    entry.push_str(line);
                }
            }
        }
    }
    for key in SHELL_BOOKKEEPING_VARS {
        env.remove(*key);
    }
    env
}

fn copy_tree(src: &Path, dst: &Path) -> Result<(), ExecError> {
    std::fs::create_dir_all(dst)?;
    copy_perms(src, dst)?;
    for entry in walkdir::WalkDir::new(src).min_depth(1).sort_by_file_name() {
        let entry = entry.map_err(|e| ExecError::Unavailable(format!("seed tree walk: {e}")))?;
        let rel = entry
            .path()
            .strip_prefix(src)
            .expect("walkdir yields children of src");
        let target = dst.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir(&target)?;
            copy_perms(entry.path(), &target)?;
        } else if entry.file_type().is_file() {
            std::fs::copy(entry.path(), &target)?;
        }
        // Symlinks and special files are not part of the contract.
    }
    Ok(())
}

fn copy_perms(src: &Path, dst: &Path) -> Result<(), ExecError> {
    let perms = std::fs::metadata(src)?.permissions();
    std::fs::set_permissions(dst, perms)?;
    Ok(())
}

/// Writes a manifest out as a real directory tree.
fn materialise_manifest(manifest: &FsManifest, root: &Path) -> Result<(), ExecError> {
    let mut entries: Vec<_> = manifest.entries().iter().collect();
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    std::fs::create_dir_all(root)?;
    for entry in entries {
        let rel = entry.path.trim_start_matches('/');
        let target = if rel.is_empty() {
            root.to_path_buf()
        } else {
            root.join(rel)
        };
        match entry.kind {
            FileKind::Dir => {
                if target != root {
                    std::fs::create_dir(&target)?;
                }
            }
            FileKind::File => std::fs::write(&target, &entry.content)?,
        }
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            if let Some(mode) = mode_from_string(&entry.perms) {
                std::fs::set_permissions(&target, std::fs::Permissions::from_mode(mode))?;
            }
        }
    }
    Ok(())
}

/// Snapshot of a real directory tree with tree-relative absolute paths.
fn walk_tree(root: &Path) -> Result<BTreeMap<String, FileRecord>, ExecError> {
    let mut fs = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| ExecError::Unavailable(format!("tree walk: {e}")))?;
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields descendants of root");
        let virtual_path = if rel.as_os_str().is_empty() {
            "/".to_string()
        } else {
            format!("/{}", rel.display())
        };
        let meta = entry.metadata().map_err(|e| {
            ExecError::Unavailable(format!("metadata for {}: {e}", entry.path().display()))
        })?;
        let (owner, group, perms) = file_identity(&meta);
        let record = if entry.file_type().is_dir() {
            FileRecord {
                owner,
                group,
                perms: format!("d{perms}"),
                size: 0,
                kind: FileKind::Dir,
                hash: String::new(),
            }
        } else if entry.file_type().is_file() {
            let bytes = std::fs::read(entry.path())?;
            FileRecord {
                owner,
                group,
                perms: format!("-{perms}"),
                size: bytes.len() as u64,
                kind: FileKind::File,
                hash: content_hash(&bytes),
            }
        } else {
            continue;
        };
        fs.insert(virtual_path, record);
    }
    Ok(fs)
}

#[cfg(unix)]
fn file_identity(meta: &std::fs::Metadata) -> (String, String, String) {
    use std::os::unix::fs::MetadataExt;
    (
        meta.uid().to_string(),
        meta.gid().to_string(),
        mode_to_string(meta.mode()),
    )
}

#[cfg(not(unix))]
fn file_identity(_meta: &std::fs::Metadata) -> (String, String, String) {
    (
        "unknown".to_string(),
        "unknown".to_string(),
        "rwxrwxrwx".to_string(),
    )
}

/// Nine-character `rwx` string (no leading kind character) from mode bits,
/// including setuid/setgid/sticky in the conventional positions.
#[cfg(unix)]
fn mode_to_string(mode: u32) -> String {
    let mut s = String::with_capacity(9);
    let flags = [
        (0o400, 'r'),
        (0o200, 'w'),
        (0o100, 'x'),
        (0o040, 'r'),
        (0o020, 'w'),
        (0o010, 'x'),
        (0o004, 'r'),
        (0o002, 'w'),
        (0o001, 'x'),
    ];
    for (bit, ch) in flags {
        s.push(if mode & bit != 0 { ch } else { '-' });
    }
    let mut chars: Vec<char> = s.chars().collect();
    if mode & 0o4000 != 0 {
        chars[2] = if mode & 0o100 != 0 { 's' } else { 'S' };
    }
    if mode & 0o2000 != 0 {
        chars[5] = if mode & 0o010 != 0 { 's' } else { 'S' };
    }
    if mode & 0o1000 != 0 {
        chars[8] = if mode & 0o001 != 0 { 't' } else { 'T' };
    }
    chars.into_iter().collect()
}

/// Mode bits from a ten-character perms string like `drwxr-xr-x`.
fn mode_from_string(perms: &str) -> Option<u32> {
    let chars: Vec<char> = perms.chars().collect();
    if chars.len() != 10 {
        return None;
    }
    let mut mode = 0u32;
    let bits = [0o400, 0o200, 0o100, 0o040, 0o020, 0o010, 0o004, 0o002, 0o001];
    for (i, bit) in bits.iter().enumerate() {
        match chars[i + 1] {
            '-' => {}
            'r' | 'w' => mode |= bit,
            'x' | 's' | 't' => mode |= bit,
            'S' | 'T' => {}
            _ => return None,
        }
    }
    if matches!(chars[3], 's' | 'S') {
        mode |= 0o4000;
    }
    if matches!(chars[6], 's' | 'S') {
        mode |= 0o2000;
    }
    if matches!(chars[9], 't' | 'T') {
        mode |= 0o1000;
    }
    Some(mode)
}
