//! Versioned JSON envelope for fitted models.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model type with a stable format tag.
pub trait Persist: Serialize + DeserializeOwned {
    const FORMAT: &'static str;

    fn to_json(&self) -> Result<String> {
        let env = EnvelopeRef {
            format: Self::FORMAT,
            model: self,
        };
        Ok(serde_json::to_string_pretty(&env)?)
    }

    fn from_json(text: &str) -> Result<Self> {
        let raw: Envelope = serde_json::from_str(text)?;
        if raw.format != Self::FORMAT {
            return Err(Error::Format {
                expected: Self::FORMAT.to_string(),
                found: raw.format,
            });
        }
        Ok(serde_json::from_value(raw.model)?)
    }

    fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize)]
struct EnvelopeRef<'a, M> {
    format: &'a str,
    model: &'a M,
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    model: serde_json::Value,
}

/// Reads just the format tag of a saved model.
pub fn peek_format(text: &str) -> Result<String> {
    let raw: Envelope = serde_json::from_str(text)?;
    Ok(raw.format)
}
