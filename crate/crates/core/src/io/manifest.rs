//! Run manifest written next to each result file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::sweep::MapResult;

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub fingerprint: String,
    pub master_seed: u64,
    pub mode: String,
    pub t: f64,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn for_map(map: &MapResult, started: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            fingerprint: map.fingerprint.clone(),
            master_seed: map.master_seed,
            mode: map.mode.as_str().into(),
            t: map.t,
            started,
            finished: unix_now(),
        }
    }

    /// `<result>.manifest`
    pub fn path_for(result: &Path) -> PathBuf {
        let mut name = result.as_os_str().to_owned();
        name.push(".manifest");
        PathBuf::from(name)
    }

    pub fn to_text(&self) -> String {
        format!(
            "tool_version = {}\nfingerprint = {}\nmaster_seed = {}\nmode = {}\nt = {}\nstarted = {}\nfinished = {}\n",
            self.tool_version,
            self.fingerprint,
            self.master_seed,
            self.mode,
            super::table::format_g17(self.t),
            self.started,
            self.finished
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = RunManifest {
            tool_version: String::new(),
            fingerprint: String::new(),
            master_seed: 0,
            mode: String::new(),
            t: f64::NAN,
            started: 0,
            finished: 0,
        };
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Syntax {
                line: line_no,
                message: "expected `key = value`".into(),
            })?;
            let v = v.trim();
            let bad = || Error::Syntax {
                line: line_no,
                message: format!("cannot parse `{v}`"),
            };
            match k.trim() {
                "tool_version" => m.tool_version = v.into(),
                "fingerprint" => m.fingerprint = v.into(),
                "master_seed" => m.master_seed = v.parse().map_err(|_| bad())?,
                "mode" => m.mode = v.into(),
                "t" => m.t = v.parse().map_err(|_| bad())?,
                "started" => m.started = v.parse().map_err(|_| bad())?,
                "finished" => m.finished = v.parse().map_err(|_| bad())?,
                other => return Err(Error::UnknownKey(other.into())),
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{run_exact_map, GridSpec, TimeSpec};

    #[test]
    fn round_trip() {
        let map = run_exact_map(&GridSpec::square(0.0, 0.0, 1.0), 1e-4, 1e-2, TimeSpec::Fixed(450.0)).unwrap();
        let m = RunManifest::for_map(&map, 12);
        let dir = tempfile::tempdir().unwrap();
        let path = RunManifest::path_for(&dir.path().join("map.csv"));
        assert!(path.to_string_lossy().ends_with("map.csv.manifest"));
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
        assert_eq!(m.mode, "exact-pair");
    }
}
