//! Prompt templates shipped as editable text assets with `{name}` placeholders.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("template '{template}' has no value for placeholder '{name}'")]
    Missing { template: String, name: String },
    #[error("template '{template}' was given unused value '{name}'")]
    Unused { template: String, name: String },
    #[error("reading prompt asset {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl PromptTemplate {
    pub fn new(name: &str, text: &str) -> Self {
        Self { name: name.to_string(), text: text.to_string() }
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_ident(&after[..close]) => {
                    out.insert(after[..close].to_string());
                    rest = &after[close + 1..];
                }
                _ => rest = after,
            }
        }
        out
    }

    /// Substitutes every placeholder; all placeholders must be bound and every value used.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let wanted = self.placeholders();
        for (name, _) in values {
            if !wanted.contains(*name) {
                return Err(PromptError::Unused { template: self.name.clone(), name: name.to_string() });
            }
        }
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_ident(&after[..close]) => {
                    let name = &after[..close];
                    let value = values
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::Missing { template: self.name.clone(), name: name.to_string() })?;
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

macro_rules! prompt_set {
    ($($field:ident),+ $(,)?) => {
        /// All prompt assets. Built-in copies are compiled in; [`PromptSet::load_dir`]
        /// overrides any file present in a directory.
        #[derive(Debug, Clone, PartialEq)]
        pub struct PromptSet {
            $(pub $field: PromptTemplate,)+
        }

        impl PromptSet {
            pub fn builtin() -> Self {
                Self {
                    $($field: PromptTemplate::new(
                        stringify!($field),
                        include_str!(concat!("../../assets/prompts/", stringify!($field), ".txt")),
                    ),)+
                }
            }

            pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
                let mut set = Self::builtin();
                $(
                    let path = dir.join(concat!(stringify!($field), ".txt"));
                    if path.exists() {
                        let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                            path: path.display().to_string(),
                            message: e.to_string(),
                        })?;
                        set.$field = PromptTemplate::new(stringify!($field), &text);
                    }
                )+
                Ok(set)
            }

            pub fn templates(&self) -> Vec<&PromptTemplate> {
                vec![$(&self.$field),+]
            }
        }
    };
}

prompt_set!(
    analytic_system,
    heuristic_system,
    meta_actions,
    traffic_rules,
    output_format,
    decision_user,
    reflection_system,
    reflection_format,
    reflection_user,
    vlm_system,
    vlm_user,
);

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    fn system(&self, t: &PromptTemplate, format: &PromptTemplate, format_key: &str) -> Result<String, PromptError> {
        t.render(&[
            ("meta_actions", self.meta_actions.text.trim_end()),
            ("traffic_rules", self.traffic_rules.text.trim_end()),
            (format_key, format.text.trim_end()),
        ])
    }

    pub fn analytic_system_text(&self) -> Result<String, PromptError> {
        self.system(&self.analytic_system, &self.output_format, "output_format")
    }

    pub fn heuristic_system_text(&self) -> Result<String, PromptError> {
        self.system(&self.heuristic_system, &self.output_format, "output_format")
    }

    pub fn reflection_system_text(&self) -> Result<String, PromptError> {
        self.system(&self.reflection_system, &self.reflection_format, "reflection_format")
    }
}
