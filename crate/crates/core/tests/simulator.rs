mod common;

use klmm::genotypes::{build_rrm, dense_kernel};
use klmm::lmm::chi2_upper_tail;
use klmm::simulate::{generate_cohort, generate_founders, generate_phenotype, mate, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gof(observed: [usize; 3], probs: [f64; 3]) -> f64 {
    let n: usize = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    chi2_upper_tail(stat, 2).unwrap()
}

fn tally(counts: &[u8]) -> [usize; 3] {
    let mut t = [0; 3];
    for &c in counts {
        t[c as usize] += 1;
    }
    t
}

#[test]
fn hardy_weinberg_at_maf_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (g, mafs) = generate_founders(100_000, 1, [0.5, 0.5], &mut rng).unwrap();
    assert_eq!(mafs, vec![0.5]);
    let p = gof(tally(g.counts()), [0.25, 0.5, 0.25]);
    assert!(p > 1e-3, "HWE goodness of fit p = {p}");
}

#[test]
fn founder_allele_frequency_tracks_maf() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (n, m) = (10_000, 60);
    let (g, mafs) = generate_founders(n, m, [0.05, 0.5], &mut rng).unwrap();
    for (j, maf) in mafs.iter().enumerate() {
        assert!((0.05..=0.5).contains(maf));
        let freq = g.count_column(j).iter().map(|&c| c as f64).sum::<f64>() / (2 * n) as f64;
        assert!((freq - maf).abs() < 0.02, "SNP {j}: freq {freq} vs maf {maf}");
    }
}

#[test]
fn heterozygous_cross_segregates_one_two_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let parent = vec![1u8; 100_000];
    let child = mate(&parent, &parent, &mut rng).unwrap();
    let p = gof(tally(&child), [0.25, 0.5, 0.25]);
    assert!(p > 1e-3, "transmission goodness of fit p = {p}");
}

#[test]
fn homozygous_crosses_are_forced() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mother = [0, 2, 0, 2];
    let father = [0, 2, 2, 0];
    for _ in 0..100 {
        assert_eq!(mate(&mother, &father, &mut rng).unwrap(), vec![0, 2, 1, 1]);
    }
}

#[test]
fn unrelated_kernel_is_identity_dominated() {
    let cfg = SimConfig {
        n_individuals: 200,
        n_snps: 1000,
        family_fraction: 0.0,
        n_causal: 10,
        seed: 105,
        ..SimConfig::default()
    };
    let c = generate_cohort(&cfg).unwrap();
    assert!(c.family_of().iter().all(Option::is_none));
    let k = dense_kernel(&c.genotypes, &[]).unwrap();
    let n = cfg.n_individuals;
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off += k[(i, j)].abs();
            }
        }
    }
    off /= (n * (n - 1)) as f64;
    assert!(off < 3.0 / (cfg.n_snps as f64).sqrt(), "mean |K_ij| = {off}");
}

#[test]
fn kinship_of_siblings_and_strangers() {
    let cfg = SimConfig {
        n_individuals: 200,
        n_snps: 5000,
        family_fraction: 0.5,
        n_causal: 10,
        seed: 106,
        ..SimConfig::default()
    };
    let c = generate_cohort(&cfg).unwrap();
    let k = dense_kernel(&c.genotypes, &[]).unwrap();
    let fam = c.family_of();
    let (mut sib, mut ns, mut cross, mut nc) = (0.0, 0, 0.0, 0);
    for i in 0..cfg.n_individuals {
        for j in (i + 1)..cfg.n_individuals {
            let r = k[(i, j)] / (k[(i, i)] * k[(j, j)]).sqrt();
            match (fam[i], fam[j]) {
                (Some(a), Some(b)) if a == b => {
                    sib += r;
                    ns += 1;
                }
                (Some(a), Some(b)) if a != b => {
                    cross += r;
                    nc += 1;
                }
                (Some(_), None) | (None, Some(_)) => {
                    cross += r;
                    nc += 1;
                }
                _ => {}
            }
        }
    }
    let (sib, cross) = (sib / ns as f64, cross / nc as f64);
    assert!((sib - 0.5).abs() < 0.05, "sibling correlation {sib}");
    assert!(cross.abs() < 0.05, "unrelated correlation {cross}");
}

#[test]
fn families_have_full_sibships() {
    let cfg = SimConfig {
        n_individuals: 237,
        n_snps: 300,
        family_fraction: 0.7,
        offspring_per_pair: 10,
        n_causal: 40,
        seed: 107,
        ..SimConfig::default()
    };
    let c = generate_cohort(&cfg).unwrap();
    // floor(0.7 * 237) = 165 -> 16 families of 10
    assert_eq!(cfg.n_offspring(), 160);
    let mut sizes = vec![0; cfg.n_families()];
    for f in c.family_of().iter().flatten() {
        sizes[*f] += 1;
    }
    assert!(sizes.iter().all(|&s| s == 10));
    let mut idx = c.causal_indices.clone();
    idx.dedup();
    assert_eq!(idx.len(), 40);
    assert_eq!(c.mendelian_violations(), 0);
}

#[test]
fn noise_only_phenotype_has_unit_variance() {
    let cfg = SimConfig {
        n_individuals: 4000,
        n_snps: 20,
        family_fraction: 0.0,
        n_causal: 0,
        heritability: 0.0,
        seed: 108,
        ..SimConfig::default()
    };
    let c = generate_cohort(&cfg).unwrap();
    let n = c.phenotype.len() as f64;
    let mean = c.phenotype.iter().sum::<f64>() / n;
    let var = c.phenotype.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
}

/// Sample covariance of y over fresh phenotype draws against
/// `I + sg2 Xc Xc' / C + sh2 W W' / H`.
#[test]
fn phenotype_covariance_matches_model() {
    let cfg = SimConfig {
        n_individuals: 50,
        n_snps: 200,
        family_fraction: 0.6,
        offspring_per_pair: 5,
        n_causal: 20,
        heritability: 0.4,
        hidden_enabled: true,
        n_hidden: 30,
        hidden_strength: 0.3,
        seed: 109,
        ..SimConfig::default()
    };
    let c = generate_cohort(&cfg).unwrap();
    let (sg2, se2, sh2) = cfg.variances();
    assert!((sh2 - 3.0 / 7.0).abs() < 1e-15);
    let n = cfg.n_individuals;
    let xc = klmm::genotypes::GenotypeMatrix::from_columns(
        n,
        &c.causal_indices.iter().map(|&j| c.genotypes.count_column(j)).collect::<Vec<_>>(),
    )
    .unwrap()
    .standardize()
    .unwrap();
    let kc = dense_kernel(&xc, &[]).unwrap();
    let kh = dense_kernel(c.hidden_genotypes.as_ref().unwrap(), &[]).unwrap();
    let sigma = |i: usize, j: usize| (i == j) as u8 as f64 * se2 + sg2 * kc[(i, j)] + sh2 * kh[(i, j)];

    let reps = 2000;
    let mut s = vec![0.0; n * n];
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    for _ in 0..reps {
        let y = generate_phenotype(&c, &cfg, &mut rng).unwrap().phenotype;
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] += y[i] * y[j];
            }
        }
    }
    let (mut outside, mut total, mut worst) = (0, 0, 0.0f64);
    for i in 0..n {
        for j in i..n {
            let est = s[i * n + j] / reps as f64;
            let sd = ((sigma(i, j).powi(2) + sigma(i, i) * sigma(j, j)) / reps as f64).sqrt();
            let z = (est - sigma(i, j)).abs() / sd;
            worst = worst.max(z);
            outside += (z > 3.0) as usize;
            total += 1;
        }
    }
    // 3-sigma exceedances occur at rate 0.27% per entry under the model
    assert!(
        (outside as f64) < 0.01 * total as f64,
        "{outside} of {total} entries outside 3 sigma"
    );
    assert!(worst < 5.0, "largest deviation {worst} sigma");
}

#[test]
fn hidden_block_shares_the_pedigree() {
    let cfg = SimConfig {
        n_individuals: 100,
        n_snps: 50,
        family_fraction: 1.0,
        n_causal: 5,
        hidden_enabled: true,
        n_hidden: 2000,
        seed: 111,
        ..SimConfig::default()
    };
    let c = generate_cohort(&cfg).unwrap();
    assert_eq!(c.mendelian_violations(), 0);
    let h = c.hidden_genotypes.as_ref().unwrap();
    let k = build_rrm(h, &[]).unwrap().reconstruct();
    // individuals 0 and 1 are siblings, 0 and 10 are not
    let r = |i: usize, j: usize| k[(i, j)] / (k[(i, i)] * k[(j, j)]).sqrt();
    assert!((r(0, 1) - 0.5).abs() < 0.1, "hidden sibling correlation {}", r(0, 1));
    assert!(r(0, 10).abs() < 0.1);
}

#[test]
fn founder_snps_are_in_linkage_equilibrium() {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let n = 2000;
    let (g, _) = generate_founders(n, 200, [0.05, 0.5], &mut rng).unwrap();
    let x = g.standardize().unwrap();
    let mut total = 0.0;
    let pairs = 500;
    for _ in 0..pairs {
        let a = rng.random_range(0..200);
        let b = (a + rng.random_range(1..200)) % 200;
        let (ca, cb) = (x.column(a).unwrap(), x.column(b).unwrap());
        let r: f64 = ca.iter().zip(cb).map(|(u, v)| u * v).sum::<f64>() / n as f64;
        total += r.abs();
    }
    let mean = total / pairs as f64;
    assert!(mean < 4.0 / (n as f64).sqrt(), "mean |r| = {mean}");
}
