use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{HamPoly, MonoKey};
use crate::error::{Error, Result};
use crate::lattice::{MultiIndex, Site, MAX_DIM};

/// One serialized term: `[[site coords], exponent]` lists for `alpha`,
/// `beta`, `gamma` plus the coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermRecord {
    pub alpha: Vec<(Vec<i32>, u32)>,
    pub beta: Vec<(Vec<i32>, u32)>,
    pub gamma: Vec<(Vec<i32>, u32)>,
    pub re: f64,
    pub im: f64,
}

fn encode(idx: &MultiIndex) -> Vec<(Vec<i32>, u32)> {
    idx.iter().map(|(s, e)| (s.coords().to_vec(), e)).collect()
}

fn decode(entries: &[(Vec<i32>, u32)]) -> Result<MultiIndex> {
    for (c, _) in entries {
        if c.is_empty() || c.len() > MAX_DIM {
            return Err(Error::InvalidInput(format!("site {c:?} has unsupported dimension")));
        }
    }
    Ok(MultiIndex::from_pairs(
        entries.iter().map(|(c, e)| (Site::new(c), *e)),
    ))
}

impl HamPoly {
    /// Records sorted by canonical key.
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.iter()
            .map(|(k, c)| TermRecord {
                alpha: encode(&k.alpha()),
                beta: encode(&k.beta()),
                gamma: encode(&k.gamma()),
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    pub fn from_records(records: &[TermRecord]) -> Result<HamPoly> {
        let mut terms = Vec::with_capacity(records.len());
        for r in records {
            let key = MonoKey::from_indices(&decode(&r.alpha)?, &decode(&r.beta)?, &decode(&r.gamma)?);
            terms.push((key, Complex64::new(r.re, r.im)));
        }
        Ok(HamPoly::from_terms(terms))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_records())?)
    }

    pub fn from_json(text: &str) -> Result<HamPoly> {
        let records: Vec<TermRecord> = serde_json::from_str(text)?;
        HamPoly::from_records(&records)
    }
}
