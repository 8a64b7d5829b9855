use serde::{Deserialize, Serialize};

use super::ProjectionError;
use crate::ingestion::{CorpusOrigin, PromptCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFamily {
    Object,
    Style,
}

impl PromptFamily {
    pub fn base(self) -> &'static str {
        match self {
            PromptFamily::Object => "a photo of a {}",
            PromptFamily::Style => "a photo in the style of a {}",
        }
    }
}

/// Extra phrasings emitted after the base template. `{}` marks the concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    pub object_variants: Vec<String>,
    pub style_variants: Vec<String>,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        TemplateConfig {
            object_variants: owned(&[
                "a picture of a {}",
                "an image of a {}",
                "a close-up photo of a {}",
                "a cropped photo of a {}",
                "a good photo of a {}",
                "a rendering of a {}",
            ]),
            style_variants: owned(&[
                "a picture in the style of a {}",
                "an image in the style of a {}",
                "a rendering in the style of a {}",
                "a painting in the style of a {}",
            ]),
        }
    }
}

impl TemplateConfig {
    pub fn none() -> Self {
        TemplateConfig { object_variants: Vec::new(), style_variants: Vec::new() }
    }
}

/// Concept-major expansion: for each concept the base template, then its
/// variants in configured order.
pub fn expand_prompt_templates(
    concepts: &[String],
    family: PromptFamily,
    config: &TemplateConfig,
) -> Result<PromptCorpus, ProjectionError> {
    if concepts.is_empty() || concepts.iter().any(|c| c.trim().is_empty()) {
        return Err(ProjectionError::NoConcepts);
    }
    let variants = match family {
        PromptFamily::Object => &config.object_variants,
        PromptFamily::Style => &config.style_variants,
    };
    let mut prompts = Vec::with_capacity(concepts.len() * (1 + variants.len()));
    for c in concepts {
        let c = c.trim();
        prompts.push(family.base().replace("{}", c));
        for v in variants {
            let p = v.replace("{}", c);
            if !prompts.contains(&p) {
                prompts.push(p);
            }
        }
    }
    Ok(PromptCorpus::new(prompts, CorpusOrigin::TemplateExpanded).expect("templates yield non-empty prompts"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lung() -> Vec<String> {
        vec!["lung xray".to_string()]
    }

    #[test]
    fn object_family_contains_base() {
        let c = expand_prompt_templates(&lung(), PromptFamily::Object, &TemplateConfig::default()).unwrap();
        assert!(c.prompts().iter().any(|p| p == "a photo of a lung xray"));
        assert!(c.len() > 1);
        assert_eq!(c.origin(), CorpusOrigin::TemplateExpanded);
    }

    #[test]
    fn style_family_contains_base() {
        let c = expand_prompt_templates(&lung(), PromptFamily::Style, &TemplateConfig::default()).unwrap();
        assert_eq!(c.prompts()[0], "a photo in the style of a lung xray");
    }

    #[test]
    fn no_variants_one_per_concept() {
        let concepts = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        for fam in [PromptFamily::Object, PromptFamily::Style] {
            let c = expand_prompt_templates(&concepts, fam, &TemplateConfig::none()).unwrap();
            assert_eq!(c.len(), 3);
        }
    }

    #[test]
    fn empty_concepts_rejected() {
        assert!(matches!(
            expand_prompt_templates(&[], PromptFamily::Object, &TemplateConfig::default()),
            Err(ProjectionError::NoConcepts)
        ));
    }
}
