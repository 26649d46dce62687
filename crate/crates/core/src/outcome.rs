use serde::{Deserialize, Serialize};

/// Decision for a loan application.
///
/// The binary target `1` ("payment difficulty") corresponds to [`Outcome::Reject`];
/// `Accept` is the favorable outcome for every selection-rate metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accept,
    Reject,
}

impl Outcome {
    /// Numeric target used for training: 1.0 for `Reject`, 0.0 for `Accept`.
    pub fn target(self) -> f64 {
        match self {
            Outcome::Accept => 0.0,
            Outcome::Reject => 1.0,
        }
    }

    pub fn from_target(target: u8) -> Option<Self> {
        match target {
            0 => Some(Outcome::Accept),
            1 => Some(Outcome::Reject),
            _ => None,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Outcome::Accept => Outcome::Reject,
            Outcome::Reject => Outcome::Accept,
        }
    }

    pub fn is_favorable(self) -> bool {
        self == Outcome::Accept
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Accept => "Accept",
            Outcome::Reject => "Reject",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
