use crate::error::{IaError, Result};

/// Human-, object- and interaction-centric prompts for one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prompts {
    pub human: String,
    pub object: String,
    pub interaction: String,
}

pub const HUMAN_PROMPT: &str = "person";

fn clean(label: &str, what: &str) -> Result<String> {
    let text = label.replace('_', " ");
    if text.trim().is_empty() {
        return Err(IaError::arg(format!("{what} label must be non-empty")));
    }
    Ok(text)
}

pub fn build_prompts(object_label: &str, interaction_label: &str) -> Result<Prompts> {
    let object = clean(object_label, "object")?;
    let interaction = clean(interaction_label, "interaction")?;
    Ok(Prompts {
        human: HUMAN_PROMPT.to_owned(),
        interaction: format!("a photo of a person {interaction} {object}"),
        object,
    })
}
