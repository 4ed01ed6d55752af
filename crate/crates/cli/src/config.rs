//! Layered run configuration: command-line flags override the config file,
//! which overrides built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

macro_rules! layered {
    ($(#[$meta:meta])* $name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            /// Fields set in `over` win.
            pub fn layer(self, over: $name) -> $name {
                $name { $($field: over.$field.or(self.$field)),* }
            }
        }
    };
}

layered!(KbSettings {
    api_endpoint: String,
    sparql_endpoint: String,
    cache_dir: String,
    timeout_secs: u64,
    min_interval_ms: u64,
    language: String,
    search_limit: usize,
});

layered!(DictionarySettings {
    rules: String,
    person_types: Vec<String>,
    person_name_count: usize,
    middle_names: String,
    fetch_cap: usize,
});

layered!(EntitySettings {
    coverage: f64,
    allow_identity: bool,
});

layered!(ContextSettings {
    lo: usize,
    hi: usize,
    variants: usize,
    pos_source: String,
    provider_url: String,
    timeout_secs: u64,
});

layered!(AugmentSettings {
    mix: String,
    ratio: f64,
});

layered!(VocabSettings {
    case_sensitive: bool,
    include_punctuation: bool,
});

/// Everything a run can be configured with. Also the `config` object of a
/// run manifest, so a manifest can be passed back as a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offline: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub_provider: Option<String>,
    #[serde(default)]
    pub kb: KbSettings,
    #[serde(default)]
    pub dictionary: DictionarySettings,
    #[serde(default)]
    pub entity: EntitySettings,
    #[serde(default)]
    pub context: ContextSettings,
    #[serde(default)]
    pub augment: AugmentSettings,
    #[serde(default)]
    pub vocab: VocabSettings,
}

impl Settings {
    pub fn defaults() -> Settings {
        Settings {
            seed: None,
            offline: Some(false),
            stub_provider: None,
            kb: KbSettings {
                api_endpoint: None,
                sparql_endpoint: None,
                cache_dir: None,
                timeout_secs: Some(30),
                min_interval_ms: Some(200),
                language: Some("en".into()),
                search_limit: Some(10),
            },
            dictionary: DictionarySettings {
                rules: None,
                person_types: Some(vec!["PERSON".into(), "PER".into()]),
                person_name_count: None,
                middle_names: Some("random".into()),
                fetch_cap: Some(nerstress::wikidict::DEFAULT_FETCH_CAP),
            },
            entity: EntitySettings { coverage: Some(1.0), allow_identity: Some(false) },
            context: ContextSettings {
                lo: Some(100),
                hi: Some(200),
                variants: Some(8),
                pos_source: Some("builtin-lexicon".into()),
                provider_url: None,
                timeout_secs: Some(30),
            },
            augment: AugmentSettings { mix: Some("supplement".into()), ratio: Some(1.0) },
            vocab: VocabSettings { case_sensitive: Some(true), include_punctuation: Some(true) },
        }
    }

    pub fn layer(self, over: Settings) -> Settings {
        Settings {
            seed: over.seed.or(self.seed),
            offline: over.offline.or(self.offline),
            stub_provider: over.stub_provider.or(self.stub_provider),
            kb: self.kb.layer(over.kb),
            dictionary: self.dictionary.layer(over.dictionary),
            entity: self.entity.layer(over.entity),
            context: self.context.layer(over.context),
            augment: self.augment.layer(over.augment),
            vocab: self.vocab.layer(over.vocab),
        }
    }

    /// Reads a TOML or JSON config file. A run manifest is accepted too; its
    /// `config` object is used.
    pub fn from_file(path: &Path) -> CliResult<Settings> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let bad = |e: String| CliError::input(format!("config {}: {e}", path.display()));
        let is_json = path.extension().is_some_and(|x| x == "json") || text.trim_start().starts_with('{');
        if !is_json {
            return toml::from_str(&text).map_err(|e| bad(e.to_string()));
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let body = match value.get("config") {
            Some(config) if value.get("tool").is_some() => config.clone(),
            _ => value,
        };
        serde_json::from_value(body).map_err(|e| bad(e.to_string()))
    }
}
