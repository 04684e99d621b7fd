use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{PassportError, Result};
use crate::ledger::{LedgerError, Reader, Writer};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VaccinationRecord {
    pub vaccine: String,
    pub dose: u32,
    /// ISO-8601 calendar date, `yyyy-mm-dd`.
    pub date: String,
    pub issuer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

impl VaccinationRecord {
    pub fn new(vaccine: &str, dose: u32, date: &str, issuer: &str) -> Self {
        Self {
            vaccine: vaccine.to_string(),
            dose,
            date: date.to_string(),
            issuer: issuer.to_string(),
            free_text: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dose < 1 {
            return Err(PassportError::Validation("dose must be at least 1".into()));
        }
        if NaiveDate::parse_from_str(&self.date, "%Y-%m-%d").is_err() || self.date.len() != 10 {
            return Err(PassportError::Validation(format!(
                "record date {:?} is not yyyy-mm-dd",
                self.date
            )));
        }
        if self.vaccine.is_empty() || self.issuer.is_empty() {
            return Err(PassportError::Validation("vaccine and issuer are required".into()));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.vaccine)
            .u32(self.dose)
            .str(&self.date)
            .str(&self.issuer)
            .opt_bytes(self.free_text.as_deref().map(str::as_bytes));
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        let vaccine = r.str()?.to_string();
        let dose = r.u32()?;
        let date = r.str()?.to_string();
        let issuer = r.str()?.to_string();
        let free_text = r
            .opt_bytes()?
            .map(|b| String::from_utf8(b.to_vec()).map_err(|_| LedgerError::Malformed("free text is not utf-8".into())))
            .transpose()?;
        r.finish()?;
        Ok(Self {
            vaccine,
            dose,
            date,
            issuer,
            free_text,
        })
    }
}
