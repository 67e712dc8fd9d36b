use std::fs;
use std::path::{Path, PathBuf};

use bsf_core::data::write_csv;
use bsf_core::Dataset;

use crate::CliError;

enum Content {
    Bytes(Vec<u8>),
    Csv { data: Dataset, label_column: String },
}

/// Output files collected in memory and written in one go.
///
/// Nothing touches the disk until [`Outputs::commit`]; if any write fails
/// every file written so far is removed again, together with the output
/// directory (and its `frames/` subdirectory) when this call created them.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Content)>,
}

impl Outputs {
    pub fn bytes(&mut self, relative: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((relative.into(), Content::Bytes(bytes)));
    }

    pub fn text(&mut self, relative: impl Into<PathBuf>, text: String) {
        self.bytes(relative, text.into_bytes());
    }

    pub fn csv(&mut self, relative: impl Into<PathBuf>, data: Dataset, label_column: &str) {
        self.files.push((
            relative.into(),
            Content::Csv {
                data,
                label_column: label_column.to_string(),
            },
        ));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let mut created_dirs = vec![];
        let mut written = vec![];
        let result = self.write_all(dir, &mut created_dirs, &mut written);
        if result.is_err() {
            for path in written.iter().rev() {
                let _ = fs::remove_file(path);
            }
            for d in created_dirs.iter().rev() {
                let _ = fs::remove_dir(d);
            }
        }
        result.map(|()| written)
    }

    fn write_all(self, dir: &Path, created_dirs: &mut Vec<PathBuf>, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
        for (relative, content) in self.files {
            let path = dir.join(relative);
            if let Some(parent) = path.parent() {
                // Create missing ancestors one by one so cleanup knows which are ours.
                let missing: Vec<&Path> = parent.ancestors().take_while(|p| !p.as_os_str().is_empty() && !p.exists()).collect();
                for d in missing.into_iter().rev() {
                    fs::create_dir(d).map_err(|e| CliError::io(d, e))?;
                    created_dirs.push(d.to_path_buf());
                }
            }
            written.push(path.clone());
            match content {
                Content::Bytes(bytes) => fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?,
                Content::Csv { data, label_column } => write_csv(&data, &path, &label_column)?,
            }
        }
        Ok(())
    }
}
