//! Invocation streams: the synthetic generator, trace files and the catalogs
//! of functions and data objects they refer to.

mod catalog;
mod trace;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Exp, Zipf};
use serde::{Deserialize, Serialize};

pub use catalog::{Catalog, FunctionId, ObjectId};
pub use trace::{load_trace, read_trace, write_trace, TraceRecord};

use crate::cluster::{FunctionSpec, MemoryFlavor};
use crate::error::{Error, Result};
use crate::scenario::Diagnostic;
use crate::sim::{RandomSource, SimTime};

/// One event to dispatch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub id: String,
    pub function: FunctionId,
    /// Distinct objects, in reference order.
    pub data_refs: Vec<ObjectId>,
    /// Origin tag from the event metadata.
    pub origin: String,
    pub arrival: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalProcess {
    Poisson { rate_per_s: f64 },
    FixedInterval { interval_ms: u64 },
}

impl Default for ArrivalProcess {
    fn default() -> Self {
        ArrivalProcess::FixedInterval { interval_ms: 100 }
    }
}

/// A function plus its share of the invocation mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionMix {
    pub name: String,
    #[serde(default)]
    pub code_size: u64,
    pub flavor: u64,
    pub compute_ms: u64,
    #[serde(default)]
    pub write_back: u64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl FunctionMix {
    pub fn spec(&self) -> FunctionSpec {
        FunctionSpec {
            name: self.name.clone(),
            code_size: self.code_size,
            flavor: MemoryFlavor(self.flavor),
            compute_ms: self.compute_ms,
            write_back: self.write_back,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeDistribution {
    Fixed(u64),
    Uniform { min: u64, max: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Popularity {
    Uniform,
    Zipf { s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub count: usize,
    pub size: SizeDistribution,
    pub popularity: Popularity,
    /// Initial replicas per object.
    #[serde(default = "one_usize")]
    pub replicas: usize,
}

fn one_usize() -> usize {
    1
}

impl Default for ObjectSpec {
    fn default() -> Self {
        ObjectSpec {
            count: 0,
            size: SizeDistribution::Fixed(0),
            popularity: Popularity::Uniform,
            replicas: 1,
        }
    }
}

/// Inclusive uniform range of distinct objects referenced per invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefsPerInvocation {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginWeight {
    pub tag: String,
    #[serde(default = "one")]
    pub weight: f64,
}

fn default_origins() -> Vec<OriginWeight> {
    vec![OriginWeight {
        tag: "default".into(),
        weight: 1.0,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Last admissible arrival. Inherited from the scenario when unset.
    #[serde(default)]
    pub horizon_ms: u64,
    #[serde(default)]
    pub arrival: ArrivalProcess,
    /// Stops generation after this many invocations.
    #[serde(default)]
    pub max_invocations: Option<usize>,
    pub functions: Vec<FunctionMix>,
    #[serde(default)]
    pub objects: ObjectSpec,
    #[serde(default)]
    pub refs_per_invocation: RefsPerInvocation,
    #[serde(default = "default_origins")]
    pub origins: Vec<OriginWeight>,
    /// Replay this trace file instead of generating arrivals.
    #[serde(default)]
    pub trace: Option<std::path::PathBuf>,
}

impl WorkloadSpec {
    /// Every problem with the spec, keyed by config path below `workload`.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut err = |key: &str, msg: String| out.push(Diagnostic::error(format!("workload.{key}"), msg));
        if self.horizon_ms == 0 {
            err("horizon_ms", "horizon must be positive".into());
        }
        match self.arrival {
            ArrivalProcess::Poisson { rate_per_s } if !(rate_per_s > 0.0 && rate_per_s.is_finite()) => {
                err("arrival.rate_per_s", format!("rate must be positive, got {rate_per_s}"))
            }
            ArrivalProcess::FixedInterval { interval_ms: 0 } => {
                err("arrival.interval_ms", "interval must be positive".into())
            }
            _ => {}
        }
        if self.functions.is_empty() {
            err("functions", "at least one function is required".into());
        }
        for (i, f) in self.functions.iter().enumerate() {
            if !(f.weight > 0.0 && f.weight.is_finite()) {
                err(&format!("functions[{i}].weight"), format!("weight must be positive, got {}", f.weight));
            }
            if f.compute_ms == 0 {
                err(&format!("functions[{i}].compute_ms"), "compute_ms must be >= 1".into());
            }
        }
        match self.objects.popularity {
            Popularity::Zipf { s } if !(s > 0.0 && s.is_finite()) => {
                err("objects.popularity", format!("zipf exponent s must be > 0, got {s}"))
            }
            _ => {}
        }
        if let SizeDistribution::Uniform { min, max } = self.objects.size {
            if min > max {
                err("objects.size", format!("uniform size range is empty ({min} > {max})"));
            }
        }
        if self.objects.replicas == 0 {
            err("objects.replicas", "every object needs at least one replica".into());
        }
        let refs = &self.refs_per_invocation;
        if refs.min > refs.max {
            err("refs_per_invocation", format!("min {} exceeds max {}", refs.min, refs.max));
        }
        if refs.max > self.objects.count {
            err(
                "refs_per_invocation.max",
                format!("{} distinct refs requested but only {} objects exist", refs.max, self.objects.count),
            );
        }
        if self.origins.is_empty() {
            err("origins", "at least one origin tag is required".into());
        }
        for (i, o) in self.origins.iter().enumerate() {
            if !(o.weight > 0.0 && o.weight.is_finite()) {
                err(&format!("origins[{i}].weight"), format!("weight must be positive, got {}", o.weight));
            }
        }
        out
    }

    fn check(&self) -> Result<()> {
        match self.diagnostics().into_iter().next() {
            Some(d) => Err(Error::InvalidSpec(d.to_string())),
            None => Ok(()),
        }
    }

    /// Draws object sizes and builds the catalog. Sizes are the first draws
    /// taken from `rng`, one per object in id order.
    pub fn build_catalog(&self, nodes: usize, rng: &mut RandomSource) -> Result<Catalog> {
        self.check()?;
        let sizes: Vec<u64> = (0..self.objects.count)
            .map(|_| match self.objects.size {
                SizeDistribution::Fixed(mb) => mb,
                SizeDistribution::Uniform { min, max } => rng.rng().random_range(min..=max),
            })
            .collect();
        let functions = self.functions.iter().map(FunctionMix::spec).collect();
        Catalog::with_generated_objects(functions, &sizes, nodes, self.objects.replicas)
    }
}

/// Generates arrivals over `(0, horizon_ms]`, sorted by time.
///
/// Per invocation the draw order is: inter-arrival gap (Poisson only),
/// function, reference count, each reference, origin.
pub fn generate_trace(
    spec: &WorkloadSpec,
    catalog: &Catalog,
    rng: &mut RandomSource,
) -> Result<Vec<Invocation>> {
    spec.check()?;
    let invalid = |e: &dyn std::fmt::Display| Error::InvalidSpec(e.to_string());
    let functions: Vec<FunctionId> = spec
        .functions
        .iter()
        .map(|f| catalog.function_id(&f.name))
        .collect::<Result<_>>()?;
    let function_pick =
        WeightedIndex::new(spec.functions.iter().map(|f| f.weight)).map_err(|e| invalid(&e))?;
    let origin_pick =
        WeightedIndex::new(spec.origins.iter().map(|o| o.weight)).map_err(|e| invalid(&e))?;
    let object_count = catalog.objects().len();
    if spec.refs_per_invocation.max > object_count {
        return Err(Error::InvalidSpec(format!(
            "{} refs per invocation but the catalog holds {object_count} objects",
            spec.refs_per_invocation.max
        )));
    }
    let zipf = match spec.objects.popularity {
        Popularity::Zipf { s } if object_count > 0 => {
            Some(Zipf::new(object_count as f64, s).map_err(|e| invalid(&e))?)
        }
        _ => None,
    };
    let gaps = match spec.arrival {
        ArrivalProcess::Poisson { rate_per_s } => {
            Some(Exp::new(rate_per_s / 1000.0).map_err(|e| invalid(&e))?)
        }
        ArrivalProcess::FixedInterval { .. } => None,
    };
    let limit = spec.max_invocations.unwrap_or(usize::MAX);

    let mut trace = Vec::new();
    let mut clock = 0f64;
    let mut n: u64 = 0;
    while trace.len() < limit {
        let arrival = match (&spec.arrival, &gaps) {
            (ArrivalProcess::FixedInterval { interval_ms }, _) => (n + 1) * interval_ms,
            (_, Some(exp)) => {
                clock += exp.sample(rng.rng());
                clock.floor() as u64
            }
            _ => unreachable!(),
        };
        if arrival > spec.horizon_ms {
            break;
        }
        let function = functions[function_pick.sample(rng.rng())];
        let refs = &spec.refs_per_invocation;
        let count = if refs.max > refs.min {
            refs.min + rng.index(refs.max - refs.min + 1)
        } else {
            refs.min
        };
        let mut data_refs = Vec::with_capacity(count);
        while data_refs.len() < count {
            let rank = match &zipf {
                Some(z) => (z.sample(rng.rng()) as usize).clamp(1, object_count) - 1,
                None => rng.index(object_count),
            };
            let object = ObjectId(rank as u32);
            if !data_refs.contains(&object) {
                data_refs.push(object);
            }
        }
        let origin = spec.origins[origin_pick.sample(rng.rng())].tag.clone();
        trace.push(Invocation {
            id: format!("i{n}"),
            function,
            data_refs,
            origin,
            arrival: SimTime(arrival),
        });
        n += 1;
    }
    Ok(trace)
}
