//! The fixed set of hazard categories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A natural-hazard category.
///
/// Declaration order is the canonical category order used for every
/// deterministic tie break (argmax fallback, apportionment remainders).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hazard {
    Wildfire,
    Storm,
    Landslide,
    Hurricane,
    Flood,
    Earthquake,
    Tsunami,
}

impl Hazard {
    pub const COUNT: usize = 7;

    pub const ALL: [Hazard; Hazard::COUNT] = [
        Hazard::Wildfire,
        Hazard::Storm,
        Hazard::Landslide,
        Hazard::Hurricane,
        Hazard::Flood,
        Hazard::Earthquake,
        Hazard::Tsunami,
    ];

    /// Position in [`Hazard::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Hazard::Wildfire => "Wildfire",
            Hazard::Storm => "Storm",
            Hazard::Landslide => "Landslide",
            Hazard::Hurricane => "Hurricane",
            Hazard::Flood => "Flood",
            Hazard::Earthquake => "Earthquake",
            Hazard::Tsunami => "Tsunami",
        }
    }
}

impl fmt::Display for Hazard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown hazard category '{0}'")]
pub struct UnknownHazard(pub String);

impl FromStr for Hazard {
    type Err = UnknownHazard;

    /// Case-insensitive; accepts simple plurals ("floods", "wildfires").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let stem = lower
            .strip_suffix("es")
            .filter(|st| *st == "tsunami")
            .or_else(|| lower.strip_suffix('s'))
            .unwrap_or(&lower);
        Hazard::ALL
            .into_iter()
            .find(|h| {
                let name = h.name().to_ascii_lowercase();
                name == lower || name == stem
            })
            .ok_or_else(|| UnknownHazard(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_matches_index() {
        for (i, h) in Hazard::ALL.iter().enumerate() {
            assert_eq!(h.index(), i);
        }
        assert!(Hazard::Wildfire < Hazard::Tsunami);
    }

    #[test]
    fn parse_is_lenient_on_case_and_plural() {
        assert_eq!("flood".parse::<Hazard>().unwrap(), Hazard::Flood);
        assert_eq!("Floods".parse::<Hazard>().unwrap(), Hazard::Flood);
        assert_eq!("EARTHQUAKE".parse::<Hazard>().unwrap(), Hazard::Earthquake);
        assert_eq!("tsunamis".parse::<Hazard>().unwrap(), Hazard::Tsunami);
        assert!("volcano".parse::<Hazard>().is_err());
    }

    #[test]
    fn serde_uses_display_names() {
        let s = serde_json::to_string(&Hazard::Hurricane).unwrap();
        assert_eq!(s, "\"Hurricane\"");
    }
}
