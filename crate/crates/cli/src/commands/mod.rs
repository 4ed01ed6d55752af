pub mod attack;
pub mod augment;
pub mod build_dict;
pub mod evaluate;
pub mod stats;

use std::str::FromStr;

use nerstress::corpus::VocabOptions;

use crate::config::Settings;
use crate::error::{CliError, CliResult};

/// A layered value that the defaults always provide.
pub(crate) fn resolved<T: Clone>(value: &Option<T>) -> T {
    value.clone().expect("set by the defaults layer")
}

pub(crate) fn parse_setting<T: FromStr<Err = String>>(name: &str, value: &Option<String>) -> CliResult<T> {
    resolved(value).parse().map_err(|e: String| CliError::usage(format!("{name}: {e}")))
}

pub(crate) fn vocab_options(settings: &Settings) -> VocabOptions {
    VocabOptions {
        case_sensitive: resolved(&settings.vocab.case_sensitive),
        include_punctuation: resolved(&settings.vocab.include_punctuation),
    }
}
