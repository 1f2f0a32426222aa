//! Directory-backed file-drop channel between the service and the robot.
//!
//! Each published name lives at `<dir>/<name>` with a sidecar
//! `<dir>/<name>.meta`:
//!
//! ```text
//! revision=<n>
//! written_at=<ISO-8601>
//! ```
//!
//! Publishing writes both files through temp-and-rename while holding an
//! exclusive lock on `<dir>/.<name>.lock`; fetching holds the shared lock,
//! so readers never see content from one revision paired with metadata
//! from another, and never see a partial file.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat};
use patrol_core::Timestamp;

const POLL_INTERVAL: Duration = Duration::from_millis(10);

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("channel directory {path} is unavailable: {source}")]
    ChannelUnavailable { path: PathBuf, source: io::Error },
    #[error("invalid channel file name `{0}`")]
    BadName(String),
    #[error("nothing published under `{0}`")]
    NotFound(String),
    #[error("no revision newer than {since} of `{name}` appeared in time")]
    Timeout { name: String, since: u64 },
    #[error("corrupt metadata for `{name}`: {message}")]
    CorruptMeta { name: String, message: String },
    #[error("channel io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelFile {
    pub name: String,
    pub revision: u64,
    pub written_at: Timestamp,
    pub content: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Meta {
    revision: u64,
    written_at: Timestamp,
}

#[derive(Debug, Clone)]
pub struct SyncChannel {
    dir: PathBuf,
}

impl SyncChannel {
    /// Open an existing directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ChannelError> {
        let dir = dir.into();
        match fs::metadata(&dir) {
            Ok(m) if m.is_dir() => Ok(Self { dir }),
            Ok(_) => Err(ChannelError::ChannelUnavailable {
                path: dir,
                source: io::Error::new(io::ErrorKind::NotADirectory, "not a directory"),
            }),
            Err(source) => Err(ChannelError::ChannelUnavailable { path: dir, source }),
        }
    }

    /// Open, creating the directory first if needed.
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, ChannelError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| ChannelError::ChannelUnavailable {
            path: dir.clone(),
            source,
        })?;
        Self::open(dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn check_name(name: &str) -> Result<(), ChannelError> {
        let ok = !name.is_empty()
            && !name.starts_with('.')
            && !name.ends_with(".meta")
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
        if ok {
            Ok(())
        } else {
            Err(ChannelError::BadName(name.to_string()))
        }
    }

    fn unavailable(&self, source: io::Error) -> ChannelError {
        ChannelError::ChannelUnavailable {
            path: self.dir.clone(),
            source,
        }
    }

    fn lock_file(&self, name: &str) -> Result<File, ChannelError> {
        OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .write(true)
            .open(self.dir.join(format!(".{name}.lock")))
            .map_err(|e| self.unavailable(e))
    }

    fn read_meta(&self, name: &str) -> Result<Option<Meta>, ChannelError> {
        let text = match fs::read_to_string(self.dir.join(format!("{name}.meta"))) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |message: &str| ChannelError::CorruptMeta {
            name: name.to_string(),
            message: message.to_string(),
        };
        let mut revision = None;
        let mut written_at = None;
        for line in text.lines() {
            match line.split_once('=') {
                Some(("revision", v)) => {
                    revision = Some(v.trim().parse().map_err(|_| corrupt("bad revision"))?)
                }
                Some(("written_at", v)) => {
                    written_at = Some(
                        DateTime::parse_from_rfc3339(v.trim())
                            .map_err(|_| corrupt("bad written_at"))?
                            .to_utc(),
                    )
                }
                _ => {}
            }
        }
        match (revision, written_at) {
            (Some(revision), Some(written_at)) => Ok(Some(Meta {
                revision,
                written_at,
            })),
            _ => Err(corrupt("missing revision or written_at")),
        }
    }

    fn write_atomic(&self, target: &Path, bytes: &[u8]) -> Result<(), ChannelError> {
        let tmp = self.dir.join(format!(
            ".tmp.{}.{}",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let result = (|| {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, target)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result.map_err(|e| self.unavailable(e))
    }

    /// Replace the content of `name`. Returns the new revision (1 on the
    /// first publish).
    pub fn publish(
        &self,
        name: &str,
        content: &[u8],
        written_at: Timestamp,
    ) -> Result<u64, ChannelError> {
        Self::check_name(name)?;
        let lock = self.lock_file(name)?;
        lock.lock()?;
        let revision = self.read_meta(name)?.map_or(0, |m| m.revision) + 1;
        self.write_atomic(&self.dir.join(name), content)?;
        let meta = format!(
            "revision={revision}\nwritten_at={}\n",
            written_at.to_rfc3339_opts(SecondsFormat::AutoSi, true)
        );
        self.write_atomic(&self.dir.join(format!("{name}.meta")), meta.as_bytes())?;
        lock.unlock()?;
        Ok(revision)
    }

    /// Latest revision of `name`, or `None` before the first publish.
    pub fn revision(&self, name: &str) -> Result<Option<u64>, ChannelError> {
        Self::check_name(name)?;
        let lock = self.lock_file(name)?;
        lock.lock_shared()?;
        let meta = self.read_meta(name)?;
        lock.unlock()?;
        Ok(meta.map(|m| m.revision))
    }

    pub fn fetch_latest(&self, name: &str) -> Result<ChannelFile, ChannelError> {
        Self::check_name(name)?;
        let lock = self.lock_file(name)?;
        lock.lock_shared()?;
        let meta = self.read_meta(name)?;
        let content = match meta {
            Some(_) => Some(fs::read(self.dir.join(name))?),
            None => None,
        };
        lock.unlock()?;
        match (meta, content) {
            (Some(m), Some(content)) => Ok(ChannelFile {
                name: name.to_string(),
                revision: m.revision,
                written_at: m.written_at,
                content,
            }),
            _ => Err(ChannelError::NotFound(name.to_string())),
        }
    }

    /// Wait for a revision of `name` newer than `since`.
    pub fn await_change(
        &self,
        name: &str,
        since: u64,
        timeout: Duration,
    ) -> Result<u64, ChannelError> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(rev) = self.revision(name)? {
                if rev > since {
                    return Ok(rev);
                }
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ChannelError::Timeout {
                    name: name.to_string(),
                    since,
                });
            }
            std::thread::sleep(POLL_INTERVAL.min(deadline - now));
        }
    }
}
