//! Durable state: the append-only episode file and per-session snapshots.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use adaptrl_core::episode::Episode;

use crate::session::Session;

/// Appends one JSON line per finished session. Each record goes out in a
/// single write under a lock, so concurrent sessions never interleave.
#[derive(Debug)]
pub struct EpisodeSink {
    path: PathBuf,
    file: Mutex<File>,
}

impl EpisodeSink {
    pub fn open(path: impl AsRef<Path>) -> io::Result<EpisodeSink> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(EpisodeSink {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, episode: &Episode) -> io::Result<()> {
        let mut line = episode.to_line().map_err(io::Error::other)?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }
}

/// One JSON file per session, replaced atomically after every change.
#[derive(Debug, Clone)]
pub struct Snapshots {
    dir: Option<PathBuf>,
}

impl Snapshots {
    pub fn new(dir: Option<PathBuf>) -> io::Result<Snapshots> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Snapshots { dir })
    }

    pub fn save(&self, session: &Session) -> io::Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let tmp = dir.join(format!("{}.json.tmp", session.session_id));
        let bytes = serde_json::to_vec(session).map_err(io::Error::other)?;
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, dir.join(format!("{}.json", session.session_id)))
    }

    /// Every stored session, in file-name order.
    pub fn load_all(&self) -> io::Result<Vec<Session>> {
        let Some(dir) = &self.dir else {
            return Ok(Vec::new());
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let text = fs::read(p)?;
                serde_json::from_slice(&text)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))
            })
            .collect()
    }
}
