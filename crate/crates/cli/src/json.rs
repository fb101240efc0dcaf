//! JSON document types written and read by the command-line tool.
//!
//! Every document carries a `format` tag and a `version` number so that a
//! file handed to the wrong subcommand fails with a clear message instead
//! of a field-level parse error. Provenance is tracked through SHA-256
//! digests: a filtration names the chain it was computed from, a block map
//! names the chain, the filtration, and the aggregated chain it ties
//! together, and a distance report names both chains it compared.
//!
//! Serialization is deterministic: struct fields keep declaration order,
//! floats use the shortest exact decimal form, and rendered documents end
//! with a single trailing newline.

use serde::{Deserialize, Serialize};
use tlump::{Filtration, FiltrationStep, Partition};

use crate::error::{CliError, CliResult};

pub const FILTRATION_FORMAT: &str = "tlump-filtration";
pub const BLOCKMAP_FORMAT: &str = "tlump-blockmap";
pub const REPORT_FORMAT: &str = "tlump-report";
pub const META_FORMAT: &str = "tlump-meta";
pub const PARTITION_FORMAT: &str = "tlump-partition";

/// Renders a document as pretty JSON with a trailing newline.
pub fn render<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("document serializes");
    text.push('\n');
    text
}

fn check_tag(what: &str, found: &str, expected: &str, version: u32) -> CliResult<()> {
    if found != expected {
        return Err(CliError::data(format!(
            "bad {what} file: format is {found:?}, expected {expected:?}"
        )));
    }
    if version != 1 {
        return Err(CliError::data(format!(
            "bad {what} file: unsupported version {version}"
        )));
    }
    Ok(())
}

/// `epsilon` fields hold `+inf` for the initial step, which JSON numbers
/// cannot express; infinity travels as the string `"infinity"`.
mod epsilon_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() {
            ser.serialize_str("infinity")
        } else {
            ser.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Number(x) => Ok(x),
            Raw::Text(s) if s == "infinity" => Ok(f64::INFINITY),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "epsilon must be a number or \"infinity\", got {s:?}"
            ))),
        }
    }
}

/// A refinement run: the resolution schedule as executed and the partition
/// after every step, tied to the source chain by digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationFile {
    pub format: String,
    pub version: u32,
    pub chain_sha256: String,
    pub n_states: usize,
    pub beta: f64,
    pub reached_fixpoint: bool,
    pub steps: Vec<StepDto>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDto {
    #[serde(with = "epsilon_text")]
    pub epsilon: f64,
    pub n_blocks: usize,
    pub blocks: Vec<Vec<u32>>,
}

impl FiltrationFile {
    pub fn new(filtration: &Filtration, beta: f64, chain_sha256: String) -> Self {
        let steps = filtration
            .steps()
            .iter()
            .map(|s| StepDto {
                epsilon: s.epsilon,
                n_blocks: s.partition.n_blocks(),
                blocks: s.partition.blocks().to_vec(),
            })
            .collect();
        Self {
            format: FILTRATION_FORMAT.to_string(),
            version: 1,
            chain_sha256,
            n_states: filtration.n_states(),
            beta,
            reached_fixpoint: filtration.reached_fixpoint(),
            steps,
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let file: Self = serde_json::from_str(text)
            .map_err(|e| CliError::data(format!("bad filtration file: {e}")))?;
        check_tag("filtration", &file.format, FILTRATION_FORMAT, file.version)?;
        Ok(file)
    }

    /// Rebuilds the in-memory filtration, re-running all structural checks
    /// (non-empty disjoint covering blocks, refinement between steps).
    pub fn to_filtration(&self) -> CliResult<Filtration> {
        let mut steps = Vec::with_capacity(self.steps.len());
        for (i, dto) in self.steps.iter().enumerate() {
            if dto.n_blocks != dto.blocks.len() {
                return Err(CliError::data(format!(
                    "bad filtration file: step {i} lists {} blocks but declares {}",
                    dto.blocks.len(),
                    dto.n_blocks
                )));
            }
            let blocks = dto
                .blocks
                .iter()
                .map(|b| b.iter().map(|&x| x as usize).collect())
                .collect();
            let partition = Partition::new(blocks, self.n_states)
                .map_err(|e| CliError::data(format!("bad filtration file: step {i}: {e}")))?;
            steps.push(FiltrationStep {
                epsilon: dto.epsilon,
                partition,
            });
        }
        Filtration::new(steps, self.reached_fixpoint)
            .map_err(|e| CliError::data(format!("bad filtration file: {e}")))
    }
}

/// The glue between a chain, a filtration step, and the aggregated chain
/// built from it: which block every state belongs to, under which measure
/// the rows were averaged, and the digests of all three artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockmapFile {
    pub format: String,
    pub version: u32,
    pub chain_sha256: String,
    pub filtration_sha256: String,
    pub aggregated_sha256: String,
    pub step_index: usize,
    pub measure: String,
    pub n_states: usize,
    pub n_blocks: usize,
    pub beta: f64,
    pub target_blocks: Vec<u32>,
    pub block_of: Vec<u32>,
}

impl BlockmapFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let file: Self = serde_json::from_str(text)
            .map_err(|e| CliError::data(format!("bad block map file: {e}")))?;
        check_tag("block map", &file.format, BLOCKMAP_FORMAT, file.version)?;
        Ok(file)
    }

    /// Rebuilds the partition from the stored state-to-block assignment.
    pub fn to_partition(&self) -> CliResult<Partition> {
        if self.block_of.len() != self.n_states {
            return Err(CliError::data(format!(
                "bad block map file: {} assignments for {} states",
                self.block_of.len(),
                self.n_states
            )));
        }
        let labels: Vec<usize> = self.block_of.iter().map(|&b| b as usize).collect();
        let partition = Partition::from_block_of(&labels)
            .map_err(|e| CliError::data(format!("bad block map file: {e}")))?;
        if partition.n_blocks() != self.n_blocks {
            return Err(CliError::data(format!(
                "bad block map file: assignment has {} blocks but declares {}",
                partition.n_blocks(),
                self.n_blocks
            )));
        }
        Ok(partition)
    }
}

/// A certified distance evaluation between a chain and an aggregated chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub version: u32,
    pub chain_sha256: String,
    pub aggregated_sha256: String,
    pub beta: f64,
    pub tail_tol: f64,
    pub horizon: usize,
    pub value: f64,
    pub tail_bound: f64,
    pub upper_bound: f64,
}

impl ReportFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let file: Self = serde_json::from_str(text)
            .map_err(|e| CliError::data(format!("bad report file: {e}")))?;
        check_tag("report", &file.format, REPORT_FORMAT, file.version)?;
        Ok(file)
    }
}

/// Sidecar describing how a generated chain was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFile {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub n_states: usize,
    pub n_entries: usize,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub params: serde_json::Value,
}

impl MetaFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let file: Self = serde_json::from_str(text)
            .map_err(|e| CliError::data(format!("bad meta file: {e}")))?;
        check_tag("meta", &file.format, META_FORMAT, file.version)?;
        Ok(file)
    }
}

/// A single partition tied to a chain, written alongside generated
/// block-lifted chains so the generating partition stays available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub format: String,
    pub version: u32,
    pub chain_sha256: String,
    pub n_states: usize,
    pub n_blocks: usize,
    pub blocks: Vec<Vec<u32>>,
}

impl PartitionFile {
    pub fn new(partition: &Partition, chain_sha256: String) -> Self {
        Self {
            format: PARTITION_FORMAT.to_string(),
            version: 1,
            chain_sha256,
            n_states: partition.n_states(),
            n_blocks: partition.n_blocks(),
            blocks: partition.blocks().to_vec(),
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let file: Self = serde_json::from_str(text)
            .map_err(|e| CliError::data(format!("bad partition file: {e}")))?;
        check_tag("partition", &file.format, PARTITION_FORMAT, file.version)?;
        Ok(file)
    }

    pub fn to_partition(&self) -> CliResult<Partition> {
        if self.blocks.len() != self.n_blocks {
            return Err(CliError::data(format!(
                "bad partition file: {} blocks listed but {} declared",
                self.blocks.len(),
                self.n_blocks
            )));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|&x| x as usize).collect())
            .collect();
        Partition::new(blocks, self.n_states)
            .map_err(|e| CliError::data(format!("bad partition file: {e}")))
    }
}
