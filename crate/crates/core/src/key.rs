//! Keys, identities and delete-min strategies shared by every module.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A heap key: a 64-bit signed integer, or the internal minus-infinity
/// sentinel used by `delete`.
///
/// The sentinel is never reachable through the public insert or
/// decrease-key entry points, which take plain `i64` values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Key {
    MinusInfinity,
    Finite(i64),
}

impl Key {
    pub fn finite(self) -> Option<i64> {
        match self {
            Key::Finite(v) => Some(v),
            Key::MinusInfinity => None,
        }
    }

    pub fn is_minus_infinity(self) -> bool {
        matches!(self, Key::MinusInfinity)
    }
}

impl From<i64> for Key {
    fn from(v: i64) -> Self {
        Key::Finite(v)
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Key::MinusInfinity, Key::MinusInfinity) => Ordering::Equal,
            (Key::MinusInfinity, Key::Finite(_)) => Ordering::Less,
            (Key::Finite(_), Key::MinusInfinity) => Ordering::Greater,
            (Key::Finite(a), Key::Finite(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::MinusInfinity => f.write_str("-inf"),
            Key::Finite(v) => write!(f, "{v}"),
        }
    }
}

const MINUS_INFINITY_TOKEN: &str = "-inf";

// Finite keys are plain JSON integers; the sentinel is the string "-inf".
impl Serialize for Key {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Key::Finite(v) => serializer.serialize_i64(*v),
            Key::MinusInfinity => serializer.serialize_str(MINUS_INFINITY_TOKEN),
        }
    }
}

impl<'de> Deserialize<'de> for Key {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct KeyVisitor;

        impl Visitor<'_> for KeyVisitor {
            type Value = Key;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a 64-bit integer key or \"-inf\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Key, E> {
                Ok(Key::Finite(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Key, E> {
                i64::try_from(v).map(Key::Finite).map_err(|_| E::custom(format!("key {v} out of i64 range")))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Key, E> {
                if v == MINUS_INFINITY_TOKEN {
                    Ok(Key::MinusInfinity)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(KeyVisitor)
    }
}

/// Identity of an inserted item. Assigned sequentially from zero, never reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u64);

impl ItemId {
    pub(crate) fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "item#{}", self.0)
    }
}

/// Identity of a heap. `make_heap` and `meld` both allocate fresh ids in
/// creation order; ids consumed by `meld` are dead forever.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeapId(pub u64);

impl HeapId {
    pub(crate) fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for HeapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "heap#{}", self.0)
    }
}

/// How `delete_min` relinks the children of the removed root.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// One left-to-right pairing pass, then a right-to-left assembly pass.
    #[default]
    TwoPass,
    /// Repeated left-to-right pairing passes until one root remains.
    Multipass,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::TwoPass => "twopass",
            Strategy::Multipass => "multipass",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "twopass" => Ok(Strategy::TwoPass),
            "multipass" => Ok(Strategy::Multipass),
            other => Err(format!("unknown strategy `{other}` (expected twopass or multipass)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_below_every_finite_key() {
        assert!(Key::MinusInfinity < Key::Finite(i64::MIN));
        assert!(Key::Finite(i64::MIN) < Key::Finite(i64::MAX));
        assert_eq!(Key::MinusInfinity.cmp(&Key::MinusInfinity), Ordering::Equal);
    }

    #[test]
    fn key_json_forms() {
        assert_eq!(serde_json::to_string(&Key::Finite(-7)).unwrap(), "-7");
        assert_eq!(serde_json::to_string(&Key::MinusInfinity).unwrap(), "\"-inf\"");
        assert_eq!(serde_json::from_str::<Key>("\"-inf\"").unwrap(), Key::MinusInfinity);
        assert_eq!(serde_json::from_str::<Key>("12").unwrap(), Key::Finite(12));
        assert!(serde_json::from_str::<Key>("\"inf\"").is_err());
        assert!(serde_json::from_str::<Key>("18446744073709551615").is_err());
    }

    #[test]
    fn strategy_parse() {
        assert_eq!("twopass".parse::<Strategy>().unwrap(), Strategy::TwoPass);
        assert_eq!("multipass".parse::<Strategy>().unwrap(), Strategy::Multipass);
        assert!("threepass".parse::<Strategy>().is_err());
    }
}
