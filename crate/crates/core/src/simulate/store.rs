//! Cohort persistence: genotype containers, a phenotype text file and a
//! TOML sidecar with the configuration and ground truth.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SimConfig, SimulatedCohort};
use crate::error::{Error, Result};
use crate::genotypes::{read_binary, write_binary, GenotypeMatrix};

pub const METADATA_FILE: &str = "metadata.toml";
pub const METADATA_VERSION: u32 = 1;

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written as
/// decimal strings. Both forms are accepted on read.
pub(crate) mod seed_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    fn to_repr(seed: u64) -> Repr {
        i64::try_from(seed).map_or_else(|_| Repr::Text(seed.to_string()), Repr::Int)
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<u64, E> {
        match r {
            Repr::Int(v) => u64::try_from(v).map_err(|_| E::custom(format!("negative seed {v}"))),
            Repr::Text(s) => s.parse().map_err(|_| E::custom(format!("invalid seed {s:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*seed).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(seed: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
            seed.map(to_repr).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFiles {
    pub genotypes: String,
    pub phenotype: String,
    pub parents: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents_hidden: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub format_version: u32,
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub n_individuals: usize,
    pub n_snps: usize,
    /// Ground truth; absent for datasets without known causal SNPs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub causal_indices: Option<Vec<usize>>,
    #[serde(default)]
    pub causal_weights: Vec<f64>,
    #[serde(default)]
    pub hidden_weights: Vec<f64>,
    /// Family label per individual, `-1` for independent founders.
    pub family_of: Vec<i64>,
    pub config: SimConfig,
    pub files: CohortFiles,
}

impl Metadata {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A cohort as read back from disk (counts are unstandardized).
#[derive(Debug, Clone)]
pub struct StoredCohort {
    pub genotypes: GenotypeMatrix,
    pub hidden_genotypes: Option<GenotypeMatrix>,
    pub phenotype: Vec<f64>,
    pub metadata: Metadata,
}

pub fn write_phenotype(y: &[f64], path: &Path) -> Result<()> {
    let mut text = String::with_capacity(y.len() * 25);
    for v in y {
        // 17 significant digits round-trip every f64
        writeln!(text, "{v:.16e}").unwrap();
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_phenotype(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|_| Error::format(path, format!("line {}: bad number {l:?}", i + 1)))
        })
        .collect()
}

/// Writes all cohort files into `dir` and returns the paths written.
pub fn write_cohort(cohort: &SimulatedCohort, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = CohortFiles {
        genotypes: "genotypes.klmm".into(),
        phenotype: "phenotype.txt".into(),
        parents: "parents.klmm".into(),
        hidden: cohort.hidden_genotypes.as_ref().map(|_| "hidden.klmm".into()),
        parents_hidden: cohort.parents_hidden.as_ref().map(|_| "parents_hidden.klmm".into()),
    };
    let mut written = Vec::new();
    let mut put = |name: &str, g: &GenotypeMatrix| -> Result<()> {
        let p = dir.join(name);
        write_binary(g, &p)?;
        written.push(p);
        Ok(())
    };
    put(&files.genotypes, &cohort.genotypes)?;
    put(&files.parents, &cohort.parents)?;
    if let (Some(name), Some(h)) = (&files.hidden, &cohort.hidden_genotypes) {
        put(name, h)?;
    }
    if let (Some(name), Some(h)) = (&files.parents_hidden, &cohort.parents_hidden) {
        put(name, h)?;
    }
    let p = dir.join(&files.phenotype);
    write_phenotype(&cohort.phenotype, &p)?;
    written.push(p);

    let metadata = Metadata {
        format_version: METADATA_VERSION,
        seed: cohort.config.seed,
        n_individuals: cohort.genotypes.n_individuals(),
        n_snps: cohort.genotypes.n_snps(),
        causal_indices: Some(cohort.causal_indices.clone()),
        causal_weights: cohort.causal_weights.clone(),
        hidden_weights: cohort.hidden_weights.clone(),
        family_of: cohort
            .family_of()
            .iter()
            .map(|f| f.map_or(-1, |v| v as i64))
            .collect(),
        config: cohort.config.clone(),
        files,
    };
    let p = dir.join(METADATA_FILE);
    metadata.write(&p)?;
    written.push(p);
    Ok(written)
}

pub fn read_cohort(dir: &Path) -> Result<StoredCohort> {
    let metadata = Metadata::read(&dir.join(METADATA_FILE))?;
    let genotypes = read_binary(&dir.join(&metadata.files.genotypes))?;
    let phenotype = read_phenotype(&dir.join(&metadata.files.phenotype))?;
    let hidden_genotypes = match &metadata.files.hidden {
        Some(name) => Some(read_binary(&dir.join(name))?),
        None => None,
    };
    if genotypes.n_individuals() != phenotype.len()
        || genotypes.n_individuals() != metadata.n_individuals
        || genotypes.n_snps() != metadata.n_snps
    {
        return Err(Error::format(dir, "genotype, phenotype and metadata sizes disagree"));
    }
    Ok(StoredCohort {
        genotypes,
        hidden_genotypes,
        phenotype,
        metadata,
    })
}
