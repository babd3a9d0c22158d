use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::protocol::{Task, PROTOCOL_VERSION};

pub const MANIFEST_FILE: &str = "manifest";

/// Contents of `<model_dir>/manifest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub task: Task,
    /// Executable path relative to the model directory.
    pub entry: String,
    pub protocol_version: u32,
    /// Extra arguments passed to the entry.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<String>,
}

impl Manifest {
    pub fn load(model_dir: &Path) -> Result<Manifest, String> {
        let path = model_dir.join(MANIFEST_FILE);
        let text =
            std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if m.protocol_version != PROTOCOL_VERSION {
            return Err(format!(
                "{}: protocol_version {} is not supported (expected {PROTOCOL_VERSION})",
                path.display(),
                m.protocol_version
            ));
        }
        let entry = m.entry_path(model_dir);
        if !is_executable(&entry) {
            return Err(format!(
                "entry {} is missing or not executable",
                entry.display()
            ));
        }
        Ok(m)
    }

    pub fn entry_path(&self, model_dir: &Path) -> PathBuf {
        model_dir.join(&self.entry)
    }
}

#[cfg(unix)]
fn is_executable(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    std::fs::metadata(p).is_ok_and(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
}

#[cfg(not(unix))]
fn is_executable(p: &Path) -> bool {
    p.is_file()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, manifest: &str) {
        std::fs::write(dir.join(MANIFEST_FILE), manifest).unwrap();
    }

    #[test]
    fn entry_must_be_executable() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            r#"{"name":"m","task":"CARDEST","entry":"run.sh","protocol_version":1}"#,
        );
        assert!(Manifest::load(dir.path())
            .unwrap_err()
            .contains("not executable"));
        std::fs::write(dir.path().join("run.sh"), "#!/bin/sh\n").unwrap();
        #[cfg(unix)]
        {
            assert!(Manifest::load(dir.path()).is_err());
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(
                dir.path().join("run.sh"),
                std::fs::Permissions::from_mode(0o755),
            )
            .unwrap();
        }
        let m = Manifest::load(dir.path()).unwrap();
        assert_eq!(m.task, Task::Cardest);
        assert!(m.args.is_empty());
    }

    #[test]
    fn rejects_bad_documents() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Manifest::load(dir.path()).is_err());
        write(
            dir.path(),
            r#"{"name":"m","task":"CARDEST","entry":"x","protocol_version":2}"#,
        );
        assert!(Manifest::load(dir.path())
            .unwrap_err()
            .contains("protocol_version"));
        write(
            dir.path(),
            r#"{"name":"m","task":"GUESS","entry":"x","protocol_version":1}"#,
        );
        assert!(Manifest::load(dir.path()).is_err());
    }
}
