use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::cluster::{DataObject, FunctionSpec, NodeId};
use crate::error::{Error, Result};
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionId(pub u32);

impl FunctionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Registered functions and data objects, addressable by name or dense id.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    functions: Vec<FunctionSpec>,
    function_index: HashMap<String, FunctionId>,
    objects: Vec<DataObject>,
    object_index: HashMap<String, ObjectId>,
}

impl Catalog {
    /// `objects` carry their origin placements.
    pub fn new(functions: Vec<FunctionSpec>, objects: Vec<DataObject>) -> Result<Self> {
        let mut function_index = HashMap::new();
        for (i, f) in functions.iter().enumerate() {
            if f.compute_ms == 0 {
                return Err(Error::InvalidSpec(format!(
                    "function {:?} must have compute_ms >= 1",
                    f.name
                )));
            }
            if function_index
                .insert(f.name.clone(), FunctionId(i as u32))
                .is_some()
            {
                return Err(Error::InvalidSpec(format!("duplicate function {:?}", f.name)));
            }
        }
        let mut object_index = HashMap::new();
        for (i, o) in objects.iter().enumerate() {
            if object_index.insert(o.id.clone(), ObjectId(i as u32)).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate object {:?}", o.id)));
            }
        }
        Ok(Catalog {
            functions,
            function_index,
            objects,
            object_index,
        })
    }

    /// Objects named `o0..o{n-1}` with the given sizes; object `i` starts with
    /// `replicas` copies on nodes `i, i+1, ...` modulo the node count.
    pub fn with_generated_objects(
        functions: Vec<FunctionSpec>,
        sizes: &[u64],
        nodes: usize,
        replicas: usize,
    ) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::NoNodes);
        }
        if replicas == 0 || replicas > nodes {
            return Err(Error::InvalidSpec(format!(
                "initial replicas must be in 1..={nodes}, got {replicas}"
            )));
        }
        let objects = sizes
            .iter()
            .enumerate()
            .map(|(i, &size)| DataObject {
                id: format!("o{i}"),
                size,
                placements: (0..replicas).map(|k| NodeId((i + k) % nodes)).collect::<BTreeSet<_>>(),
            })
            .collect();
        Catalog::new(functions, objects)
    }

    pub fn function(&self, id: FunctionId) -> &FunctionSpec {
        &self.functions[id.index()]
    }

    pub fn functions(&self) -> &[FunctionSpec] {
        &self.functions
    }

    pub fn function_count(&self) -> usize {
        self.functions.len()
    }

    pub fn function_id(&self, name: &str) -> Result<FunctionId> {
        self.function_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownFunction(name.to_owned()))
    }

    pub fn object_id(&self, name: &str) -> Result<ObjectId> {
        self.object_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownObject(name.to_owned()))
    }

    pub fn object(&self, id: ObjectId) -> &DataObject {
        &self.objects[id.index()]
    }

    pub fn objects(&self) -> &[DataObject] {
        &self.objects
    }

    /// Execution time with no dispatch latency, a warm container and all data
    /// local: the pure compute time.
    pub fn ideal_time(&self, function: &str) -> Result<SimTime> {
        let id = self.function_id(function)?;
        Ok(SimTime(self.function(id).compute_ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::MemoryFlavor;

    fn f(name: &str, compute_ms: u64) -> FunctionSpec {
        FunctionSpec {
            name: name.into(),
            code_size: 10,
            flavor: MemoryFlavor(128),
            compute_ms,
            write_back: 0,
        }
    }

    #[test]
    fn ideal_time_is_compute_time() {
        let catalog = Catalog::new(vec![f("resize", 80)], vec![]).unwrap();
        assert_eq!(catalog.ideal_time("resize").unwrap(), SimTime(80));
        assert!(matches!(
            catalog.ideal_time("nope"),
            Err(Error::UnknownFunction(n)) if n == "nope"
        ));
    }

    #[test]
    fn rejects_zero_compute_and_duplicates() {
        assert!(Catalog::new(vec![f("a", 0)], vec![]).is_err());
        assert!(Catalog::new(vec![f("a", 1), f("a", 2)], vec![]).is_err());
    }

    #[test]
    fn generated_objects_spread_origins() {
        let c = Catalog::with_generated_objects(vec![], &[100; 5], 3, 2).unwrap();
        let nodes: Vec<Vec<usize>> = c
            .objects()
            .iter()
            .map(|o| o.placements.iter().map(|n| n.0).collect())
            .collect();
        assert_eq!(nodes, vec![vec![0, 1], vec![1, 2], vec![0, 2], vec![0, 1], vec![1, 2]]);
        assert!(Catalog::with_generated_objects(vec![], &[1], 2, 3).is_err());
    }
}
