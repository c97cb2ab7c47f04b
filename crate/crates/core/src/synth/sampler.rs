//! Case-spec sampling under weight-based epidemiological constraints:
//! diseases draw proportionally to their prevalence weight, comorbidity
//! partners uniformly among curated pairs.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{KnowledgeBase, PersonaProfile};

use super::{CaseSpec, SynthError};

/// Draws one spec, fully determined by `rng_seed`: the primary disease by
/// prevalence weight, a comorbidity partner with probability
/// `comorbidity_rate` (uniform over the primary's curated pairs, skipped if
/// it has none), and a persona uniformly.
pub fn sample_case_spec(
    kb: &KnowledgeBase,
    personas: &[PersonaProfile],
    rng_seed: u64,
    comorbidity_rate: f64,
) -> Result<CaseSpec, SynthError> {
    if kb.diseases.is_empty() {
        return Err(SynthError::EmptyKnowledgeBase);
    }
    if personas.is_empty() {
        return Err(SynthError::NoPersonas);
    }
    if !(0.0..=1.0).contains(&comorbidity_rate) {
        return Err(SynthError::BadComorbidityRate(comorbidity_rate));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let weights: Vec<f64> = kb.diseases.iter().map(|d| d.prevalence_weight).collect();
    let index = WeightedIndex::new(&weights)
        .map_err(|_| SynthError::EmptyKnowledgeBase)?
        .sample(&mut rng);
    let disease = &kb.diseases[index];

    let comorbidity = if rng.random::<f64>() < comorbidity_rate {
        let partners = kb.partners_of(&disease.name);
        if partners.is_empty() {
            None
        } else {
            Some(partners[rng.random_range(0..partners.len())].to_string())
        }
    } else {
        None
    };

    let persona = personas[rng.random_range(0..personas.len())].clone();

    Ok(CaseSpec {
        primary_disease: disease.name.clone(),
        comorbidity,
        persona_seed: persona,
        department: disease.department.clone(),
        rng_seed,
    })
}
