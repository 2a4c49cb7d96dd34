//! Synthetic GWAS cohorts with family structure.
//!
//! Founders draw a minor allele frequency per SNP and two Bernoulli alleles
//! per individual. Families are built from a separate pool of founder
//! couples, each producing `offspring_per_pair` children; the parents
//! themselves are not part of the analysed cohort. SNPs are generated
//! independently (no linkage disequilibrium), each from its own RNG stream,
//! so results do not depend on worker count.

mod store;

pub(crate) use store::seed_repr;

pub use store::{
    read_cohort, read_phenotype, write_cohort, write_phenotype, CohortFiles, Metadata, StoredCohort,
    METADATA_FILE, METADATA_VERSION,
};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotypes::GenotypeMatrix;

/// Attempts at drawing a polymorphic column before giving up.
pub const MAX_SNP_RETRIES: usize = 100;

const STREAM_OBSERVED: u64 = 0x6f62_7365_7276_6564;
const STREAM_HIDDEN: u64 = 0x6869_6464_656e_0000;
const STREAM_CAUSAL: u64 = 0x6361_7573_616c_0000;
const STREAM_PHENOTYPE: u64 = 0x7068_656e_6f00_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_individuals: usize,
    pub n_snps: usize,
    /// Fraction of the cohort that are offspring of a founder couple.
    pub family_fraction: f64,
    pub offspring_per_pair: usize,
    pub maf_range: [f64; 2],
    pub n_causal: usize,
    /// `sigma_g2 / (sigma_g2 + sigma_e2)`.
    pub heritability: f64,
    pub hidden_enabled: bool,
    pub n_hidden: usize,
    /// `sigma_h2 / (sigma_h2 + sigma_e2)`.
    pub hidden_strength: f64,
    #[serde(with = "store::seed_repr")]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_individuals: 500,
            n_snps: 2000,
            family_fraction: 0.5,
            offspring_per_pair: 10,
            maf_range: [0.05, 0.5],
            n_causal: 50,
            heritability: 0.5,
            hidden_enabled: false,
            n_hidden: 100,
            hidden_strength: 0.3,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_individuals < 1 || self.n_snps < 1 {
            return bad("n_individuals and n_snps must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.family_fraction) {
            return bad(format!("family_fraction {} not in [0, 1]", self.family_fraction));
        }
        if self.offspring_per_pair < 1 {
            return bad("offspring_per_pair must be >= 1".into());
        }
        let [lo, hi] = self.maf_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return bad(format!("maf_range [{lo}, {hi}] must satisfy 0 < low <= high <= 0.5"));
        }
        if self.n_causal > self.n_snps {
            return bad(format!("n_causal {} exceeds n_snps {}", self.n_causal, self.n_snps));
        }
        if !(0.0..1.0).contains(&self.heritability) {
            return bad(format!("heritability {} not in [0, 1)", self.heritability));
        }
        if !(0.0..1.0).contains(&self.hidden_strength) {
            return bad(format!("hidden_strength {} not in [0, 1)", self.hidden_strength));
        }
        if self.hidden_enabled && self.n_hidden == 0 {
            return bad("hidden_enabled requires n_hidden >= 1".into());
        }
        Ok(())
    }

    /// Number of offspring, floored to whole families.
    pub fn n_offspring(&self) -> usize {
        let raw = (self.family_fraction * self.n_individuals as f64 + 1e-9).floor() as usize;
        (raw / self.offspring_per_pair) * self.offspring_per_pair
    }

    pub fn n_families(&self) -> usize {
        self.n_offspring() / self.offspring_per_pair
    }

    /// Variances anchored at `sigma_e2 = 1`: `(sigma_g2, sigma_e2, sigma_h2)`.
    pub fn variances(&self) -> (f64, f64, f64) {
        let sigma_g2 = self.heritability / (1.0 - self.heritability);
        let sigma_h2 = if self.hidden_enabled {
            self.hidden_strength / (1.0 - self.hidden_strength)
        } else {
            0.0
        };
        (sigma_g2, 1.0, sigma_h2)
    }
}

/// Who the individuals of a cohort are.
#[derive(Debug, Clone, PartialEq)]
pub struct Pedigree {
    /// Family label per cohort member; `None` for independent founders.
    pub family_of: Vec<Option<usize>>,
    /// Number of couples in the founder pool; couple `f` is pool rows
    /// `2f` (mother) and `2f + 1` (father).
    pub n_families: usize,
}

impl Pedigree {
    pub fn new(cfg: &SimConfig) -> Self {
        let n_off = cfg.n_offspring();
        let family_of = (0..cfg.n_individuals)
            .map(|i| (i < n_off).then(|| i / cfg.offspring_per_pair))
            .collect();
        Self {
            family_of,
            n_families: n_off / cfg.offspring_per_pair,
        }
    }

    pub fn parents_of(&self, i: usize) -> Option<(usize, usize)> {
        self.family_of[i].map(|f| (2 * f, 2 * f + 1))
    }

    pub fn pool_size(&self) -> usize {
        2 * self.n_families
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    /// Observed SNPs, standardized.
    pub genotypes: GenotypeMatrix,
    /// Hidden causal SNPs through the same pedigree, standardized.
    pub hidden_genotypes: Option<GenotypeMatrix>,
    /// Founder couples the offspring descend from (raw counts).
    pub parents: GenotypeMatrix,
    pub parents_hidden: Option<GenotypeMatrix>,
    pub phenotype: Vec<f64>,
    pub causal_indices: Vec<usize>,
    pub causal_weights: Vec<f64>,
    pub hidden_weights: Vec<f64>,
    pub mafs: Vec<f64>,
    pub pedigree: Pedigree,
    pub config: SimConfig,
}

impl SimulatedCohort {
    pub fn family_of(&self) -> &[Option<usize>] {
        &self.pedigree.family_of
    }

    /// Offspring/SNP pairs whose genotype cannot come from the parents.
    pub fn mendelian_violations(&self) -> usize {
        count_violations(&self.genotypes, &self.parents, &self.pedigree)
            + match (&self.hidden_genotypes, &self.parents_hidden) {
                (Some(h), Some(p)) => count_violations(h, p, &self.pedigree),
                _ => 0,
            }
    }

    pub fn is_causal(&self) -> Vec<bool> {
        let mut mask = vec![false; self.genotypes.n_snps()];
        for &j in &self.causal_indices {
            mask[j] = true;
        }
        mask
    }
}

fn count_violations(children: &GenotypeMatrix, parents: &GenotypeMatrix, ped: &Pedigree) -> usize {
    let mut bad = 0;
    for i in 0..children.n_individuals() {
        let Some((mo, fa)) = ped.parents_of(i) else {
            continue;
        };
        for j in 0..children.n_snps() {
            let (m, f, c) = (parents.count(mo, j), parents.count(fa, j), children.count(i, j));
            let lo = (m == 2) as u8 + (f == 2) as u8;
            let hi = (m > 0) as u8 + (f > 0) as u8;
            if c < lo || c > hi {
                bad += 1;
            }
        }
    }
    bad
}

/// Stable 64-bit mixing (SplitMix64 finalizer) used to derive seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, tag: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, tag));
    rng.set_stream(stream);
    rng
}

fn draw_maf<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    let [lo, hi] = range;
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn founder_genotype<R: Rng + ?Sized>(maf: f64, rng: &mut R) -> u8 {
    rng.random_bool(maf) as u8 + rng.random_bool(maf) as u8
}

/// One transmitted allele from a parent with genotype `g`.
fn transmit<R: Rng + ?Sized>(g: u8, rng: &mut R) -> u8 {
    match g {
        0 => 0,
        2 => 1,
        _ => rng.random_bool(0.5) as u8,
    }
}

/// `n` unrelated founders over `m` independent SNPs. Returns the matrix and
/// the minor allele frequency drawn for each SNP.
pub fn generate_founders<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    maf_range: [f64; 2],
    rng: &mut R,
) -> Result<(GenotypeMatrix, Vec<f64>)> {
    if n < 1 || m < 1 {
        return Err(Error::Config("founder matrix needs n, m >= 1".into()));
    }
    let [lo, hi] = maf_range;
    if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
        return Err(Error::Config(format!("maf_range [{lo}, {hi}] is invalid")));
    }
    let mafs: Vec<f64> = (0..m).map(|_| draw_maf(maf_range, rng)).collect();
    let mut counts = Vec::with_capacity(n * m);
    for _ in 0..n {
        for &maf in &mafs {
            counts.push(founder_genotype(maf, rng));
        }
    }
    Ok((GenotypeMatrix::from_counts(n, m, counts)?, mafs))
}

/// Child genotype row: one allele from each parent per SNP.
pub fn mate<R: Rng + ?Sized>(mother: &[u8], father: &[u8], rng: &mut R) -> Result<Vec<u8>> {
    if mother.len() != father.len() {
        return Err(Error::Dimension(format!(
            "parents have {} and {} SNPs",
            mother.len(),
            father.len()
        )));
    }
    Ok(mother
        .iter()
        .zip(father)
        .map(|(&m, &f)| transmit(m, rng) + transmit(f, rng))
        .collect())
}

struct Column {
    cohort: Vec<u8>,
    pool: Vec<u8>,
    maf: f64,
}

fn generate_column(cfg: &SimConfig, ped: &Pedigree, rng: &mut ChaCha8Rng) -> Option<Column> {
    let n = cfg.n_individuals;
    for _ in 0..MAX_SNP_RETRIES {
        let maf = draw_maf(cfg.maf_range, rng);
        let pool: Vec<u8> = (0..ped.pool_size()).map(|_| founder_genotype(maf, rng)).collect();
        let cohort: Vec<u8> = (0..n)
            .map(|i| match ped.parents_of(i) {
                Some((mo, fa)) => transmit(pool[mo], rng) + transmit(pool[fa], rng),
                None => founder_genotype(maf, rng),
            })
            .collect();
        if cohort.iter().any(|&c| c != cohort[0]) {
            return Some(Column { cohort, pool, maf });
        }
    }
    None
}

fn generate_block(
    cfg: &SimConfig,
    ped: &Pedigree,
    m: usize,
    tag: u64,
) -> Result<(GenotypeMatrix, GenotypeMatrix, Vec<f64>)> {
    let cols: Vec<Column> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, tag, j as u64);
            generate_column(cfg, ped, &mut rng).ok_or_else(|| {
                Error::Config(format!(
                    "SNP {j} stayed monomorphic after {MAX_SNP_RETRIES} draws; raise n_individuals or maf_range"
                ))
            })
        })
        .collect::<Result<_>>()?;
    let mafs = cols.iter().map(|c| c.maf).collect();
    let cohort: Vec<Vec<u8>> = cols.iter().map(|c| c.cohort.clone()).collect();
    let pool: Vec<Vec<u8>> = cols.into_iter().map(|c| c.pool).collect();
    Ok((
        GenotypeMatrix::from_columns(cfg.n_individuals, &cohort)?,
        GenotypeMatrix::from_columns(ped.pool_size(), &pool)?,
        mafs,
    ))
}

/// Generates a full cohort: pedigree, observed SNPs, optional hidden SNPs,
/// causal SNPs and phenotype.
pub fn generate_cohort(cfg: &SimConfig) -> Result<SimulatedCohort> {
    cfg.validate()?;
    let ped = Pedigree::new(cfg);
    let (raw, parents, mafs) = generate_block(cfg, &ped, cfg.n_snps, STREAM_OBSERVED)?;
    let genotypes = raw.standardize()?;
    let (hidden_genotypes, parents_hidden) = if cfg.hidden_enabled {
        let (h, hp, _) = generate_block(cfg, &ped, cfg.n_hidden, STREAM_HIDDEN)?;
        (Some(h.standardize()?), Some(hp))
    } else {
        (None, None)
    };
    let mut rng = stream_rng(cfg.seed, STREAM_CAUSAL, 0);
    let mut causal_indices = sample(&mut rng, cfg.n_snps, cfg.n_causal).into_vec();
    causal_indices.sort_unstable();

    let mut cohort = SimulatedCohort {
        genotypes,
        hidden_genotypes,
        parents,
        parents_hidden,
        phenotype: Vec::new(),
        causal_indices,
        causal_weights: Vec::new(),
        hidden_weights: Vec::new(),
        mafs,
        pedigree: ped,
        config: cfg.clone(),
    };
    let mut rng = stream_rng(cfg.seed, STREAM_PHENOTYPE, 0);
    let draw = generate_phenotype(&cohort, cfg, &mut rng)?;
    cohort.phenotype = draw.phenotype;
    cohort.causal_weights = draw.causal_weights;
    cohort.hidden_weights = draw.hidden_weights;
    Ok(cohort)
}

#[derive(Debug, Clone)]
pub struct PhenotypeDraw {
    pub phenotype: Vec<f64>,
    pub causal_weights: Vec<f64>,
    pub hidden_weights: Vec<f64>,
}

/// `y = X_c beta + W gamma + e` with `beta_j ~ N(0, sigma_g2 / C)`,
/// `gamma_k ~ N(0, sigma_h2 / n_hidden)` and `e ~ N(0, sigma_e2 I)`.
pub fn generate_phenotype<R: Rng + ?Sized>(
    cohort: &SimulatedCohort,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PhenotypeDraw> {
    let n = cohort.genotypes.n_individuals();
    let (sigma_g2, sigma_e2, sigma_h2) = cfg.variances();
    let c = cohort.causal_indices.len();
    let mut normal = || -> f64 { StandardNormal.sample(rng) };

    let mut y = vec![0.0; n];
    let sd_beta = if c > 0 { (sigma_g2 / c as f64).sqrt() } else { 0.0 };
    let mut causal_weights = Vec::with_capacity(c);
    for &j in &cohort.causal_indices {
        let b = sd_beta * normal();
        causal_weights.push(b);
        for (yi, x) in y.iter_mut().zip(cohort.genotypes.column(j)?) {
            *yi += b * x;
        }
    }
    let mut hidden_weights = Vec::new();
    if let (true, Some(w)) = (cfg.hidden_enabled, &cohort.hidden_genotypes) {
        let sd = (sigma_h2 / w.n_snps() as f64).sqrt();
        for k in 0..w.n_snps() {
            let g = sd * normal();
            hidden_weights.push(g);
            for (yi, x) in y.iter_mut().zip(w.column(k)?) {
                *yi += g * x;
            }
        }
    }
    let sd_e = sigma_e2.sqrt();
    for yi in y.iter_mut() {
        *yi += sd_e * normal();
    }
    Ok(PhenotypeDraw {
        phenotype: y,
        causal_weights,
        hidden_weights,
    })
}

/// Parameter lists for grid mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub family_fractions: Vec<f64>,
    pub n_causals: Vec<usize>,
    pub heritabilities: Vec<f64>,
}

impl GridSpec {
    /// The full-scale parameter lists (5 x 5 x 6 combinations).
    pub fn full() -> Self {
        Self {
            family_fractions: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            n_causals: vec![10, 50, 100, 500, 1000],
            heritabilities: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::full()
    }
}

/// One cell of a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDescriptor {
    pub config: SimConfig,
    /// `(family_fraction, n_causal, heritability, replicate)` indices.
    pub coords: (usize, usize, usize, usize),
}

impl CohortDescriptor {
    pub fn name(&self) -> String {
        let (a, b, c, r) = self.coords;
        format!(
            "ff{:.2}_c{}_h{:.2}_r{}_{}{}{}",
            self.config.family_fraction, self.config.n_causal, self.config.heritability, r, a, b, c
        )
    }
}

/// Cartesian product of the grid lists times `replicates`, each cell with its
/// own derived seed.
pub fn generate_grid(base: &SimConfig, grid: &GridSpec, replicates: usize) -> Result<Vec<CohortDescriptor>> {
    if grid.family_fractions.is_empty() || grid.n_causals.is_empty() || grid.heritabilities.is_empty() {
        return Err(Error::Config("grid lists must be nonempty".into()));
    }
    let mut out = Vec::new();
    for (a, &ff) in grid.family_fractions.iter().enumerate() {
        for (b, &nc) in grid.n_causals.iter().enumerate() {
            for (c, &h) in grid.heritabilities.iter().enumerate() {
                for r in 0..replicates {
                    let seed = [a, b, c, r]
                        .iter()
                        .fold(base.seed, |s, &k| mix_seed(s, k as u64 + 1));
                    out.push(CohortDescriptor {
                        config: SimConfig {
                            family_fraction: ff,
                            n_causal: nc,
                            heritability: h,
                            seed,
                            ..base.clone()
                        },
                        coords: (a, b, c, r),
                    });
                }
            }
        }
    }
    Ok(out)
}
