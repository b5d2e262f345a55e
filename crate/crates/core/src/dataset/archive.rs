//! Storage backends: a plain directory, or a stored (uncompressed) zip when the
//! path ends in `.zip`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use super::DatasetError;

pub fn is_zip(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("zip"))
}

fn zip_err(e: zip::result::ZipError) -> DatasetError {
    DatasetError::Zip(e.to_string())
}

/// Writes `files` in the given order. Directories must be absent or empty.
pub fn write_files(path: &Path, files: &[(String, Vec<u8>)]) -> Result<(), DatasetError> {
    if is_zip(path) {
        let mut zw = ZipWriter::new(fs::File::create(path)?);
        let opts = SimpleFileOptions::default()
            .compression_method(CompressionMethod::Stored)
            .last_modified_time(DateTime::default())
            .unix_permissions(0o644);
        for (name, bytes) in files {
            zw.start_file(name.as_str(), opts).map_err(zip_err)?;
            zw.write_all(bytes)?;
        }
        zw.finish().map_err(zip_err)?;
        return Ok(());
    }
    if path.exists() {
        if !path.is_dir() {
            return Err(DatasetError::Invalid(format!(
                "{} exists and is not a directory",
                path.display()
            )));
        }
        if fs::read_dir(path)?.next().is_some() {
            return Err(DatasetError::Invalid(format!(
                "{} is not empty",
                path.display()
            )));
        }
    }
    fs::create_dir_all(path)?;
    for (name, bytes) in files {
        let dst = path.join(name);
        if let Some(parent) = dst.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(dst, bytes)?;
    }
    Ok(())
}

/// Reads every regular file, keyed by `/`-separated relative path.
pub fn read_files(path: &Path) -> Result<BTreeMap<String, Vec<u8>>, DatasetError> {
    let mut out = BTreeMap::new();
    if is_zip(path) {
        let mut za = ZipArchive::new(fs::File::open(path)?).map_err(zip_err)?;
        for i in 0..za.len() {
            let mut f = za.by_index(i).map_err(zip_err)?;
            if f.is_dir() {
                continue;
            }
            let mut buf = Vec::with_capacity(f.size() as usize);
            f.read_to_end(&mut buf)?;
            out.insert(f.name().to_string(), buf);
        }
        return Ok(out);
    }
    if !path.is_dir() {
        return Err(DatasetError::Invalid(format!(
            "{} is not a directory or .zip",
            path.display()
        )));
    }
    collect_dir(path, "", &mut out)?;
    Ok(out)
}

fn collect_dir(
    root: &Path,
    prefix: &str,
    out: &mut BTreeMap<String, Vec<u8>>,
) -> Result<(), DatasetError> {
    for entry in fs::read_dir(root.join(prefix))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let rel = if prefix.is_empty() {
            name
        } else {
            format!("{prefix}/{name}")
        };
        let ty = entry.file_type()?;
        if ty.is_dir() {
            collect_dir(root, &rel, out)?;
        } else if ty.is_file() {
            out.insert(rel, fs::read(entry.path())?);
        }
    }
    Ok(())
}
