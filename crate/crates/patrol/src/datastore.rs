//! Embedded transactional store for [`Tables`].
//!
//! The database file is JSON Lines, one row per line tagged with its
//! logical table. Every write clones the tables, applies the change,
//! writes the whole file through temp-and-rename and only then publishes
//! the new state to readers.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use patrol_core::store::{Row, StoreError, Tables};

#[derive(Debug, thiserror::Error)]
pub enum DatastoreError {
    #[error("database io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug)]
pub struct Datastore {
    path: Option<PathBuf>,
    tables: RwLock<Tables>,
}

/// Render tables as JSON Lines.
pub fn export_text(tables: &Tables) -> String {
    let mut out = String::new();
    for row in tables.rows() {
        out.push_str(&serde_json::to_string(&row).expect("rows serialize"));
        out.push('\n');
    }
    out
}

pub fn import_text(text: &str) -> Result<Tables, DatastoreError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line).map_err(|e| DatastoreError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(Tables::from_rows(rows)?)
}

impl Datastore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            tables: RwLock::new(Tables::new()),
        }
    }

    /// Open the database at `path`, starting empty if the file is absent.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, DatastoreError> {
        let path = path.into();
        let tables = match fs::read_to_string(&path) {
            Ok(text) => import_text(&text)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Tables::new(),
            Err(source) => return Err(DatastoreError::Io { path, source }),
        };
        Ok(Self {
            path: Some(path),
            tables: RwLock::new(tables),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn read<R>(&self, f: impl FnOnce(&Tables) -> R) -> R {
        f(&self.tables.read().unwrap())
    }

    pub fn snapshot(&self) -> Tables {
        self.read(Tables::clone)
    }

    /// Run `f` against a copy of the tables and commit the copy only if
    /// `f` succeeds and the result reaches disk.
    pub fn transact<R, E>(&self, f: impl FnOnce(&mut Tables) -> Result<R, E>) -> Result<R, E>
    where
        E: From<DatastoreError>,
    {
        let mut guard = self.tables.write().unwrap();
        let mut next = guard.clone();
        let out = f(&mut next)?;
        if next != *guard {
            self.persist(&next)?;
            *guard = next;
        }
        Ok(out)
    }

    fn persist(&self, tables: &Tables) -> Result<(), DatastoreError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io_err = |source| DatastoreError::Io {
            path: path.clone(),
            source,
        };
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        tmp.write_all(export_text(tables).as_bytes())
            .map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }

    pub fn export(&self) -> String {
        self.read(export_text)
    }

    /// Replace all tables with the imported ones.
    pub fn import(&self, text: &str) -> Result<(), DatastoreError> {
        let tables = import_text(text)?;
        self.transact(|t| {
            *t = tables;
            Ok::<_, DatastoreError>(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::DateTime;
    use patrol_core::store::{ReportPayload, UserCategory};
    use patrol_core::{ObstacleClass, SemanticLocation};

    fn chair() -> ReportPayload {
        ReportPayload::Obstacle {
            obstacle_type: ObstacleClass::Chair,
            count: 2,
            location: SemanticLocation::parse("corridor_5").unwrap(),
        }
    }

    #[test]
    fn committed_state_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("patrol.db");
        let now = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
        {
            let db = Datastore::open(&path).unwrap();
            db.transact(|t| {
                let u = t.add_user("alice", UserCategory::Registered, now);
                Ok::<_, DatastoreError>(t.insert_report(u, chair(), now)?)
            })
            .unwrap();
        }
        let db = Datastore::open(&path).unwrap();
        assert_eq!(db.read(|t| t.reports().count()), 1);
        assert!(db.read(|t| t.user_by_name("alice").is_some()));
    }

    #[test]
    fn failed_transaction_leaves_no_trace() {
        let db = Datastore::in_memory();
        let now = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
        let r: Result<(), DatastoreError> = db.transact(|t| {
            t.add_user("bob", UserCategory::Registered, now);
            t.insert_report(42, chair(), now)?;
            Ok(())
        });
        assert!(matches!(
            r,
            Err(DatastoreError::Store(StoreError::UnknownUser(42)))
        ));
        assert_eq!(db.read(|t| t.users().count()), 0);
    }

    #[test]
    fn export_import_round_trip() {
        let db = Datastore::in_memory();
        let now = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
        db.transact(|t| {
            let g = t.add_user("", UserCategory::Guest, now);
            Ok::<_, DatastoreError>(t.insert_report(g, chair(), now)?)
        })
        .unwrap();
        let text = db.export();
        assert!(text
            .lines()
            .any(|l| l.contains("\"table\":\"users_guests\"")));
        let other = Datastore::in_memory();
        other.import(&text).unwrap();
        assert_eq!(other.snapshot(), db.snapshot());
    }

    #[test]
    fn garbage_is_rejected_with_line() {
        assert!(matches!(
            import_text("{\"table\":\"meta\"}\nnot json\n"),
            Err(DatastoreError::Parse { line: 1, .. }) | Err(DatastoreError::Parse { line: 2, .. })
        ));
    }
}
