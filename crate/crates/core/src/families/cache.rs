//! On-disk and in-process cache of verified families.
//!
//! Files are keyed by kind, parameters, seed and construction version, carry a
//! sha256 over their content, and are written by temp-file rename so that
//! concurrent processes never observe a partial file.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scf::{build_scf_with, ScfParams};
use super::selective::{build_selective, build_strongly_selective};
use super::{FamilyError, FamilyKind, Provenance, SetFamily, Strategy, Verification};

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "RADIOCAST_CACHE_DIR";

/// Bumped whenever a construction changes its output for a given seed.
pub const CONSTRUCTION_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyRequest {
    Selective { k: u64, m: u64, strategy: Strategy },
    StronglySelective { k: u64, m: u64, strategy: Strategy },
    Scf { l: u64, c: u32, d: f64 },
}

impl FamilyRequest {
    pub fn build(&self, seed: u64) -> Result<SetFamily, FamilyError> {
        match *self {
            Self::Selective { k, m, strategy } => build_selective(k, m, strategy, seed),
            Self::StronglySelective { k, m, strategy } => {
                build_strongly_selective(k, m, strategy, seed)
            }
            Self::Scf { l, c, d } => build_scf_with(&ScfParams::new(l, c, d, seed)),
        }
    }

    /// Stable file-name stem.
    pub fn key(&self, seed: u64) -> String {
        let body = match *self {
            Self::Selective { k, m, strategy } => {
                format!("sel-k{k}-m{m}-{}", strategy_tag(strategy))
            }
            Self::StronglySelective { k, m, strategy } => {
                format!("ssf-k{k}-m{m}-{}", strategy_tag(strategy))
            }
            Self::Scf { l, c, d } => format!("scf-l{l}-c{c}-d{d}"),
        };
        format!("{body}-s{seed}-v{CONSTRUCTION_VERSION}")
    }
}

fn strategy_tag(s: Strategy) -> &'static str {
    match s {
        Strategy::Singleton => "single",
        Strategy::Randomized => "rand",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    kind: FamilyKind,
    params: FamilyRequest,
    seed: u64,
    universe_max: u64,
    provenance: Provenance,
    verified: Verification,
    sets: Vec<Vec<u64>>,
    checksum: String,
}

impl CacheFile {
    fn new(req: FamilyRequest, seed: u64, f: &SetFamily) -> Self {
        let mut file = Self {
            version: CONSTRUCTION_VERSION,
            kind: f.kind,
            params: req,
            seed,
            universe_max: f.universe_max,
            provenance: f.provenance,
            verified: f.verification,
            sets: f.sets.clone(),
            checksum: String::new(),
        };
        file.checksum = file.digest();
        file
    }

    fn digest(&self) -> String {
        let mut blank = self.clone();
        blank.checksum.clear();
        let bytes = serde_json::to_vec(&blank).expect("cache file serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn into_family(self) -> SetFamily {
        SetFamily {
            universe_max: self.universe_max,
            kind: self.kind,
            provenance: self.provenance,
            verification: self.verified,
            sets: self.sets,
        }
    }
}

fn memo() -> &'static Mutex<HashMap<String, Arc<SetFamily>>> {
    static MEMO: OnceLock<Mutex<HashMap<String, Arc<SetFamily>>>> = OnceLock::new();
    MEMO.get_or_init(Default::default)
}

/// Directory from the environment, if set.
pub fn default_cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)
}

pub fn cache_path(dir: &Path, req: &FamilyRequest, seed: u64) -> PathBuf {
    dir.join(format!("{}.json", req.key(seed)))
}

/// Reads and checks one cache file.
pub fn load_cached(path: &Path) -> Result<Option<SetFamily>, FamilyError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(FamilyError::Io(e.to_string())),
    };
    let file: CacheFile =
        serde_json::from_str(&text).map_err(|e| FamilyError::CacheCorrupt(e.to_string()))?;
    if file.digest() != file.checksum || file.version != CONSTRUCTION_VERSION {
        return Err(FamilyError::CacheCorrupt(format!(
            "checksum mismatch in {}",
            path.display()
        )));
    }
    Ok(Some(file.into_family()))
}

fn persist(path: &Path, file: &CacheFile) -> Result<(), FamilyError> {
    let io = |e: std::io::Error| FamilyError::Io(e.to_string());
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    serde_json::to_writer(&mut tmp, file).map_err(|e| FamilyError::Io(e.to_string()))?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Loads a verified family from `cache_dir` (or the env directory) or builds,
/// verifies and persists it. A corrupt file is rebuilt and overwritten.
/// Without any directory the family is only memoized in process.
pub fn family_cache_get_or_build(
    req: &FamilyRequest,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<Arc<SetFamily>, FamilyError> {
    let key = req.key(seed);
    if let Some(f) = memo().lock().expect("memo lock").get(&key) {
        return Ok(Arc::clone(f));
    }
    let dir = cache_dir.map(Path::to_path_buf).or_else(default_cache_dir);
    let family = match &dir {
        Some(dir) => {
            let path = cache_path(dir, req, seed);
            match load_cached(&path) {
                Ok(Some(f)) => f,
                Ok(None) | Err(FamilyError::CacheCorrupt(_)) => {
                    let f = req.build(seed)?;
                    persist(&path, &CacheFile::new(*req, seed, &f))?;
                    f
                }
                Err(e) => return Err(e),
            }
        }
        None => req.build(seed)?,
    };
    let family = Arc::new(family);
    memo()
        .lock()
        .expect("memo lock")
        .insert(key, Arc::clone(&family));
    Ok(family)
}

/// Drops the in-process memo; the next call goes to disk.
pub fn clear_memo() {
    memo().lock().expect("memo lock").clear();
}

#[cfg(test)]
mod tests {
    use super::*;

    // These tests share the process-wide memo, so each uses its own seed.

    #[test]
    fn cold_then_warm_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let req = FamilyRequest::Scf { l: 3, c: 2, d: 4.0 };
        let a = family_cache_get_or_build(&req, 101, Some(dir.path())).unwrap();
        let path = cache_path(dir.path(), &req, 101);
        let bytes = fs::read(&path).unwrap();
        clear_memo();
        let b = family_cache_get_or_build(&req, 101, Some(dir.path())).unwrap();
        assert_eq!(*a, *b);
        assert_eq!(fs::read(&path).unwrap(), bytes);
        assert_eq!(b.verification, Verification::Exhaustive);
    }

    #[test]
    fn corrupt_file_is_rebuilt() {
        let dir = tempfile::tempdir().unwrap();
        let req = FamilyRequest::StronglySelective {
            k: 2,
            m: 8,
            strategy: Strategy::Randomized,
        };
        let a = family_cache_get_or_build(&req, 202, Some(dir.path())).unwrap();
        let path = cache_path(dir.path(), &req, 202);
        let text = fs::read_to_string(&path).unwrap().replacen("[", "[[7],", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_cached(&path),
            Err(FamilyError::CacheCorrupt(_))
        ));
        clear_memo();
        let b = family_cache_get_or_build(&req, 202, Some(dir.path())).unwrap();
        assert_eq!(*a, *b);
        assert!(load_cached(&path).unwrap().is_some());
    }

    #[test]
    fn keys_separate_params_and_seeds() {
        let r = FamilyRequest::Selective {
            k: 2,
            m: 8,
            strategy: Strategy::Singleton,
        };
        assert_ne!(r.key(1), r.key(2));
        assert_ne!(
            r.key(1),
            FamilyRequest::Selective {
                k: 3,
                m: 8,
                strategy: Strategy::Singleton
            }
            .key(1)
        );
    }
}
