// SPDX-License-Identifier: MIT OR Apache-2.0

//! Planted-signal corpus generator.
//!
//! Each pair shares a base vector `b ~ N(0, I)`. The realized member is
//! `b + (gap/2)·u + σ·ε₁`, the paper member `b − (gap/2)·u + σ·ε₂`, with `u` a
//! seeded random unit vector and `ε` isotropic standard normal noise. Vectors
//! are written at layer 0, position −1, so every downstream stage can consume
//! them exactly like captured activations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    Condition, ConditionLabel, Domain, PromptCorpus, PromptRecord, PromptVersion, Role, Split,
    Task,
};
use crate::backend::{ActivationRecord, ActivationSet, FINAL_POSITION};
use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub dim: usize,
    /// Pairs generated for each split in `splits`.
    pub n_pairs: usize,
    pub gap: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub splits: Vec<Split>,
}

impl SynthParams {
    pub fn new(dim: usize, n_pairs: usize, gap: f64, noise_sigma: f64, seed: u64) -> Self {
        SynthParams {
            dim,
            n_pairs,
            gap,
            noise_sigma,
            seed,
            splits: vec![Split::DirectionTrain, Split::DirectionVal],
        }
    }
}

pub struct SyntheticCorpus {
    pub corpus: PromptCorpus,
    pub activations: ActivationSet,
    /// The planted unit vector `u`.
    pub planted: Vec<f64>,
}

const READOUT_DOMAINS: [Domain; 7] = [
    Domain::Finance,
    Domain::Reimbursement,
    Domain::Budget,
    Domain::Compensation,
    Domain::Academic,
    Domain::ProjectOutcome,
    Domain::Casino,
];
const BEHAVIOR_DOMAINS: [Domain; 2] = [Domain::Casino, Domain::Finance];
const PAPER_CONDITIONS: [Condition; 6] = [
    Condition::PaperEven,
    Condition::PaperLossSmall,
    Condition::PaperLossMedium,
    Condition::PaperLossLarge,
    Condition::PaperGainSmall,
    Condition::PaperGainLarge,
];
const REALIZED_CONDITIONS: [Condition; 5] = [
    Condition::RealizedLossSmall,
    Condition::RealizedLossMedium,
    Condition::RealizedLossLarge,
    Condition::RealizedLossExtreme,
    Condition::RealizedGain,
];

pub const WAGER_INSTRUCTION: &str = "Return two integers: a wager from 1 to 1000 CHF and a risk level from 1 to 5.";

pub fn plant_synthetic_pairs(params: &SynthParams) -> Result<SyntheticCorpus> {
    if params.dim < 2 {
        return Err(LabError::Invalid(format!("dim must be >= 2, got {}", params.dim)));
    }
    if params.n_pairs == 0 {
        return Err(LabError::Invalid("n_pairs must be positive".into()));
    }
    if params.splits.is_empty() {
        return Err(LabError::Invalid("at least one split is required".into()));
    }
    if !(params.gap >= 0.0 && params.gap.is_finite())
        || !(params.noise_sigma >= 0.0 && params.noise_sigma.is_finite())
    {
        return Err(LabError::Invalid("gap and noise_sigma must be finite and >= 0".into()));
    }
    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut normals = |n: usize| -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    };

    let mut planted = normals(dim);
    let norm = planted.iter().map(|x| x * x).sum::<f64>().sqrt();
    planted.iter_mut().for_each(|x| *x /= norm);

    let half = params.gap / 2.0;
    let sigma = params.noise_sigma;
    let producer = format!(
        "synthetic-planted;seed={};gap={};noise={}",
        params.seed, params.gap, params.noise_sigma
    );
    let mut activations = ActivationSet::new(dim, producer);
    let mut records = Vec::with_capacity(2 * params.n_pairs * params.splits.len());

    for &split in &params.splits {
        for i in 0..params.n_pairs {
            let base = normals(dim);
            let eps_r = normals(dim);
            let eps_p = normals(dim);
            let realized: Vec<f32> = (0..dim)
                .map(|k| (base[k] + half * planted[k] + sigma * eps_r[k]) as f32)
                .collect();
            let paper: Vec<f32> = (0..dim)
                .map(|k| (base[k] - half * planted[k] + sigma * eps_p[k]) as f32)
                .collect();

            let pair_id = format!("{split}-{i:05}");
            let (paper_rec, realized_rec) = pair_records(&pair_id, split, i);
            activations.insert(ActivationRecord {
                prompt_id: paper_rec.id.clone(),
                layer: 0,
                position: FINAL_POSITION,
                vector: paper,
            })?;
            activations.insert(ActivationRecord {
                prompt_id: realized_rec.id.clone(),
                layer: 0,
                position: FINAL_POSITION,
                vector: realized,
            })?;
            records.push(paper_rec);
            records.push(realized_rec);
        }
    }

    Ok(SyntheticCorpus {
        corpus: PromptCorpus::from_records(records)?,
        activations,
        planted,
    })
}

fn pair_records(pair_id: &str, split: Split, i: usize) -> (PromptRecord, PromptRecord) {
    let behavior = split.is_behavior();
    let domain = if behavior {
        BEHAVIOR_DOMAINS[i % BEHAVIOR_DOMAINS.len()]
    } else {
        READOUT_DOMAINS[i % READOUT_DOMAINS.len()]
    };
    let task = match (behavior, i % 2) {
        (false, _) => Task::None,
        (true, 0) => Task::WagerRisk,
        (true, _) => Task::Classification,
    };
    let amount = [20, 50, 100, 250, 500][i % 5];
    let version = if i % 2 == 0 {
        PromptVersion::Absolute
    } else {
        PromptVersion::BalanceRelative
    };
    let noun = domain_noun(domain);

    let mut paper_text = format!(
        "The {noun} shows a loss of {amount} CHF on paper and the account is still open."
    );
    let mut realized_text = format!(
        "The {noun} had a loss of {amount} CHF that was realized and the account is closed."
    );
    if task == Task::WagerRisk {
        paper_text = format!("{paper_text} {WAGER_INSTRUCTION}");
        realized_text = format!("{realized_text} {WAGER_INSTRUCTION}");
    }
    let condition = |name| {
        behavior.then_some(ConditionLabel {
            name,
            prompt_version: version,
        })
    };

    let paper = PromptRecord {
        id: format!("{pair_id}-paper"),
        pair_id: pair_id.to_string(),
        role: Role::PaperOpen,
        domain,
        split,
        source: "synthetic".into(),
        condition: condition(PAPER_CONDITIONS[i % PAPER_CONDITIONS.len()]),
        task,
        text: paper_text,
    };
    let realized = PromptRecord {
        id: format!("{pair_id}-realized"),
        role: Role::RealizedClosed,
        condition: condition(REALIZED_CONDITIONS[i % REALIZED_CONDITIONS.len()]),
        text: realized_text,
        ..paper.clone()
    };
    (paper, realized)
}

fn domain_noun(domain: Domain) -> &'static str {
    match domain {
        Domain::Finance => "portfolio",
        Domain::Reimbursement => "expense claim",
        Domain::Budget => "budget",
        Domain::Compensation => "bonus",
        Domain::Academic => "grant",
        Domain::ProjectOutcome => "project",
        Domain::Casino => "casino session",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::write_activations;

    fn delta_along(s: &SyntheticCorpus, pair: &super::super::MatchedPair) -> f64 {
        let get = |id: &str| s.activations.get(id, 0, FINAL_POSITION).unwrap();
        get(&pair.realized_prompt_id)
            .iter()
            .zip(get(&pair.paper_prompt_id))
            .zip(&s.planted)
            .map(|((&r, &p), &u)| (r as f64 - p as f64) * u)
            .sum()
    }

    #[test]
    fn noiseless_deltas_equal_gap() {
        let s = plant_synthetic_pairs(&SynthParams::new(32, 20, 4.0, 0.0, 3)).unwrap();
        for pair in s.corpus.all_pairs() {
            let d = delta_along(&s, &pair);
            assert!((d - 4.0).abs() <= 4.0 * 1e-6, "{d}");
        }
    }

    #[test]
    fn zero_gap_zero_noise_identical_members() {
        let s = plant_synthetic_pairs(&SynthParams::new(16, 5, 0.0, 0.0, 9)).unwrap();
        for pair in s.corpus.all_pairs() {
            let a = s.activations.get(&pair.paper_prompt_id, 0, FINAL_POSITION).unwrap();
            let b = s.activations.get(&pair.realized_prompt_id, 0, FINAL_POSITION).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn noiseless_mean_difference_is_gap_times_u() {
        let s = plant_synthetic_pairs(&SynthParams::new(24, 30, 2.5, 0.0, 11)).unwrap();
        let pairs = s.corpus.all_pairs();
        let mut diff = vec![0.0f64; 24];
        for pair in &pairs {
            let r = s.activations.get(&pair.realized_prompt_id, 0, -1).unwrap();
            let p = s.activations.get(&pair.paper_prompt_id, 0, -1).unwrap();
            for k in 0..24 {
                diff[k] += (r[k] as f64 - p[k] as f64) / pairs.len() as f64;
            }
        }
        for k in 0..24 {
            let want = 2.5 * s.planted[k];
            assert!((diff[k] - want).abs() <= 1e-6 * 2.5, "{k}: {} vs {want}", diff[k]);
        }
    }

    #[test]
    fn reproducible_bytes() {
        let p = SynthParams::new(8, 6, 1.0, 0.5, 42);
        let a = plant_synthetic_pairs(&p).unwrap();
        let b = plant_synthetic_pairs(&p).unwrap();
        assert_eq!(write_activations(&a.activations).unwrap(), write_activations(&b.activations).unwrap());
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        let c = plant_synthetic_pairs(&SynthParams { seed: 43, ..p }).unwrap();
        assert_ne!(write_activations(&a.activations).unwrap(), write_activations(&c.activations).unwrap());
    }

    #[test]
    fn argument_errors() {
        assert!(plant_synthetic_pairs(&SynthParams::new(1, 5, 1.0, 1.0, 0)).is_err());
        assert!(plant_synthetic_pairs(&SynthParams::new(4, 0, 1.0, 1.0, 0)).is_err());
    }

    #[test]
    fn behavior_split_tasks_alternate() {
        let p = SynthParams {
            splits: vec![Split::BehaviorEval],
            ..SynthParams::new(4, 4, 1.0, 0.0, 1)
        };
        let s = plant_synthetic_pairs(&p).unwrap();
        assert_eq!(s.corpus.behavior_prompts(Task::WagerRisk).len(), 4);
        assert_eq!(s.corpus.behavior_prompts(Task::Classification).len(), 4);
        let wr = s.corpus.behavior_prompts(Task::WagerRisk);
        assert!(wr[0].text.ends_with(WAGER_INSTRUCTION));
        assert!(matches!(wr[0].domain, Domain::Casino | Domain::Finance));
    }
}
