//! Prompt templates, embedded from `assets/prompts/`. Templates use
//! `{{variable}}` placeholders; the variables each template accepts are
//! documented in `docs/prompts.md`.

/// Bumped whenever any template text changes in a way that alters prompts.
pub const PROMPTS_VERSION: &str = "v1";

pub const PATIENT_SYSTEM: &str = include_str!("../assets/prompts/patient_system.txt");
pub const PATIENT_USER: &str = include_str!("../assets/prompts/patient_user.txt");
pub const PHYSICIAN_SYSTEM: &str = include_str!("../assets/prompts/physician_system.txt");
pub const PHYSICIAN_USER: &str = include_str!("../assets/prompts/physician_user.txt");
pub const CONSULT_USER: &str = include_str!("../assets/prompts/consult_user.txt");
pub const REFLECT_USER: &str = include_str!("../assets/prompts/reflect_user.txt");
pub const JUDGE_TREATMENT: &str = include_str!("../assets/prompts/judge_treatment.txt");
pub const JUDGE_CONSISTENCY: &str = include_str!("../assets/prompts/judge_consistency.txt");
pub const JUDGE_RESPONSE_QUALITY: &str =
    include_str!("../assets/prompts/judge_response_quality.txt");
pub const SYNTH_SUBJECTIVE: &str = include_str!("../assets/prompts/synth_subjective.txt");
pub const SYNTH_OBJECTIVE: &str = include_str!("../assets/prompts/synth_objective.txt");
pub const SYNTH_ASSESSMENT: &str = include_str!("../assets/prompts/synth_assessment.txt");
pub const SYNTH_REPAIR: &str = include_str!("../assets/prompts/synth_repair.txt");

/// Replaces each `{{name}}` with its value. Unknown placeholders are left
/// intact so a missing variable is visible in transcripts instead of
/// silently vanishing.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}
