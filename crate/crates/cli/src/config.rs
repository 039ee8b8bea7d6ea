//! `--config` file: one TOML table per subcommand, keys named like the long
//! flags with `_` for `-`. Flags win over the file, the file over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::{usage, CliError};

#[derive(Debug, Default)]
pub struct FileConfig {
    table: toml::Table,
    dir: PathBuf,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let table = text.parse::<toml::Table>().map_err(|e| format!("{}: {e}", path.display()))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(FileConfig { table, dir })
    }

    fn value(&self, section: &str, key: &str) -> Option<&toml::Value> {
        self.table.get(section)?.as_table()?.get(key)
    }

    pub fn pick_opt<T: DeserializeOwned>(
        &self,
        flag: Option<T>,
        section: &str,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.value(section, key) {
            None => Ok(None),
            Some(v) => v.clone().try_into().map(Some).map_err(|e| usage(format!("config [{section}] {key}: {e}"))),
        }
    }

    pub fn pick<T: DeserializeOwned>(
        &self,
        flag: Option<T>,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        Ok(self.pick_opt(flag, section, key)?.unwrap_or(default))
    }

    /// A path entry, resolved against the config file's directory.
    pub fn path_of(&self, section: &str, key: &str) -> Result<Option<PathBuf>, CliError> {
        let p: Option<String> = self.pick_opt(None, section, key)?;
        Ok(p.map(|p| self.dir.join(p)))
    }
}
