use std::fmt;

use crate::workload::{Catalog, Invocation};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Fixed so node choices and cluster keys agree across
/// platforms and releases.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Groups events by the code they trigger, the data they refer to and where
/// they came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterKey {
    pub function: String,
    /// FNV-1a over the sorted object names, each followed by a 0x1f byte.
    pub data_signature: u64,
    pub origin: String,
}

impl ClusterKey {
    pub fn of(inv: &Invocation, catalog: &Catalog) -> Self {
        let mut names: Vec<&str> = inv
            .data_refs
            .iter()
            .map(|&o| catalog.object(o).id.as_str())
            .collect();
        names.sort_unstable();
        let mut buf = Vec::new();
        for name in names {
            buf.extend_from_slice(name.as_bytes());
            buf.push(0x1f);
        }
        ClusterKey {
            function: catalog.function(inv.function).name.clone(),
            data_signature: stable_hash(&buf),
            origin: inv.origin.clone(),
        }
    }
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:016x}/{}", self.function, self.data_signature, self.origin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv1a_reference_vectors() {
        assert_eq!(stable_hash(b""), 0xcbf29ce484222325);
        assert_eq!(stable_hash(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(stable_hash(b"foobar"), 0x85944171f73967e8);
    }
}
