use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::Failure;

pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: PathBuf) -> Result<OutDir, Failure> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| Failure::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(OutDir { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `name` through a temporary file in the same directory, then renames it.
    pub fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<PathBuf, Failure> {
        let target = self.path(name);
        let io = |e: std::io::Error| Failure::Config(format!("cannot write {}: {e}", target.display()));
        let tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w).map_err(io)?;
            w.flush().map_err(io)?;
        }
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o644)).map_err(io)?;
        }
        tmp.persist(&target).map_err(|e| io(e.error))?;
        Ok(target)
    }
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
