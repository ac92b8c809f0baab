//! Certificate documents.
//!
//! JSON has no infinities, so extended reals (`δ₀ = −∞`, empty-set sentinels,
//! diverged costs) are written as the strings `"inf"`, `"-inf"` and `"nan"`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BinnedResult, VerifyConfig, VerifyResult};
use crate::dynamics::Mode;
use crate::error::{Error, Result};

pub const CERTIFICATE_SCHEMA_VERSION: u32 = 1;

/// Serde adapter for `f64` fields that may be infinite.
pub mod ext_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct ExtVisitor;

    impl Visitor<'_> for ExtVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtVisitor)
    }

    #[derive(serde::Serialize, serde::Deserialize)]
    #[serde(transparent)]
    pub(crate) struct Wrapped(#[serde(with = "self")] pub f64);
}

/// [`ext_f64`] for vectors.
pub mod ext_f64_vec {
    use super::ext_f64::Wrapped;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<Wrapped> = v.iter().map(|&x| Wrapped(x)).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Wrapped>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

/// What a verification run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Uniform {
        result: VerifyResult,
    },
    Binned {
        result: BinnedResult,
        /// Scored-points file that reproduces the partition.
        predictor_file: String,
    },
}

/// The report written by `reachcert verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema_version: u32,
    pub config_hash: String,
    pub system: String,
    pub mode: Mode,
    pub value_function: String,
    pub verify: VerifyConfig,
    pub outcome: Outcome,
}

impl Certificate {
    pub fn converged(&self) -> bool {
        match &self.outcome {
            Outcome::Uniform { result } => result.converged,
            Outcome::Binned { result, .. } => result.converged(),
        }
    }

    /// The recovered set is empty everywhere.
    pub fn is_empty(&self) -> bool {
        match &self.outcome {
            Outcome::Uniform { result } => result.degenerate,
            Outcome::Binned { result, .. } => result.bins.iter().all(|b| b.result.degenerate),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cert: Self = serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))?;
        if cert.schema_version != CERTIFICATE_SCHEMA_VERSION {
            return Err(Error::malformed(
                path,
                format!("unsupported certificate schema version {}", cert.schema_version),
            ));
        }
        Ok(cert)
    }
}
