use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Operating mode `offload_i`: the tails of `i` sensor pipelines run on the
/// edge server, the rest locally. `offload_0` is pure local execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(u32);

impl Action {
    pub const LOCAL: Action = Action(0);

    pub const fn offload(i: u32) -> Self {
        Action(i)
    }

    /// Number of offloaded pipelines.
    pub const fn offloaded(self) -> u32 {
        self.0
    }

    pub const fn is_local(self) -> bool {
        self.0 == 0
    }

    /// Rejects `offload_N` and above: at least one pipeline must stay local.
    pub fn check(self, n_pipelines: u32) -> Result<Self, Error> {
        if self.0 >= n_pipelines {
            return Err(Error::InvalidAction {
                action: self.to_string(),
                reason: format!("must offload fewer than {n_pipelines} pipelines"),
            });
        }
        Ok(self)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "offload_{}", self.0)
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix("offload_").unwrap_or(s);
        digits
            .parse::<u32>()
            .map(Action)
            .map_err(|_| Error::InvalidAction {
                action: s.to_string(),
                reason: "expected `offload_<i>` or an integer".into(),
            })
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u32),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(i) => Ok(Action(i)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
