//! Output directories, file helpers and the exit-code policy.

use std::fs;
use std::path::{Path, PathBuf};

use nlkg::config::{parse_config, RunConfig};

pub const OUT_DIR_ENV: &str = "NLKG_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "nlkg-out";
pub const RESOLVED_CONFIG: &str = "resolved.conf";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] nlkg::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{failed} of {total} sweep runs failed")]
    Sweep { failed: usize, total: usize, code: u8 },
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for I/O.
    pub fn exit_code(&self) -> u8 {
        use nlkg::Error as E;
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(E::Io(_) | E::Header(_) | E::Truncated { .. } | E::UnsupportedVersion(_) | E::Csv { .. }) => 4,
            CliError::Core(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Sweep { code, .. } => *code,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// The flag, then the config's own choice, then `$NLKG_OUT_DIR`, then `./nlkg-out`.
pub fn resolve_out_dir(flag: Option<PathBuf>, from_config: Option<&Path>) -> PathBuf {
    flag.or_else(|| from_config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let cfg = parse_config(&text)?;
    for w in &cfg.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(cfg)
}

/// Writes the resolved configuration, with command-specific settings as
/// leading comments, into `dir`.
pub fn write_resolved(dir: &Path, cfg: &RunConfig, notes: &[String]) -> CliResult<()> {
    let mut text = String::new();
    for n in notes {
        text.push_str("# ");
        text.push_str(n);
        text.push('\n');
    }
    if !notes.is_empty() {
        text.push('\n');
    }
    text.push_str(&cfg.to_text());
    write_text(&dir.join(RESOLVED_CONFIG), &text)
}

/// Directory holding `path`, or the current directory for a bare file name.
pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
