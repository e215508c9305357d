//! Line-oriented chain serialization:
//! `kind,mat_index,parent_hex,nonce_or_dash,creator_or_dash,payload_or_dash,id_hex`,
//! genesis first. Parsing preserves the recorded ids so tampering is
//! detectable by re-validation.

use thiserror::Error;

use crate::chain::{Block, BlockId, BlockKind, Chain, ChainError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainFileError {
    #[error("line {line}: expected 7 comma-separated fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("line {line}: unknown block kind {kind:?}")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: bad {field} field")]
    BadField { line: usize, field: &'static str },
    #[error("line {line}: field combination invalid for this kind")]
    Inconsistent { line: usize },
    #[error("empty chain file")]
    Empty,
    #[error("chain structure: {0}")]
    Structure(#[from] ChainError),
}

fn kind_str(k: BlockKind) -> &'static str {
    match k {
        BlockKind::Genesis => "genesis",
        BlockKind::Standard => "standard",
        BlockKind::Dummy => "dummy",
    }
}

fn opt_u64(v: Option<u64>) -> String {
    v.map(|n| n.to_string()).unwrap_or_else(|| "-".into())
}

pub fn block_to_line(b: &Block) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        kind_str(b.kind()),
        b.mat_index(),
        b.parent().map(|p| p.to_hex()).unwrap_or_else(|| "-".into()),
        opt_u64(b.nonce()),
        opt_u64(b.creator().map(u64::from)),
        opt_u64(b.payload_tag()),
        b.id().to_hex()
    )
}

pub fn serialize(chain: &Chain) -> String {
    let mut out = String::new();
    for b in chain.blocks() {
        out.push_str(&block_to_line(b));
        out.push('\n');
    }
    out
}

fn parse_dash_u64(s: &str, line: usize, field: &'static str) -> Result<Option<u64>, ChainFileError> {
    if s == "-" {
        return Ok(None);
    }
    s.parse::<u64>()
        .map(Some)
        .map_err(|_| ChainFileError::BadField { line, field })
}

fn parse_line(text: &str, line: usize) -> Result<Block, ChainFileError> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != 7 {
        return Err(ChainFileError::FieldCount {
            line,
            got: fields.len(),
        });
    }
    let kind = match fields[0] {
        "genesis" => BlockKind::Genesis,
        "standard" => BlockKind::Standard,
        "dummy" => BlockKind::Dummy,
        other => {
            return Err(ChainFileError::UnknownKind {
                line,
                kind: other.to_string(),
            })
        }
    };
    let mat_index = fields[1]
        .parse::<u64>()
        .map_err(|_| ChainFileError::BadField {
            line,
            field: "mat_index",
        })?;
    let parent = if fields[2] == "-" {
        None
    } else {
        Some(BlockId::from_hex(fields[2]).ok_or(ChainFileError::BadField {
            line,
            field: "parent",
        })?)
    };
    let nonce = parse_dash_u64(fields[3], line, "nonce")?;
    let creator = parse_dash_u64(fields[4], line, "creator")?
        .map(|c| u32::try_from(c).map_err(|_| ChainFileError::BadField { line, field: "creator" }))
        .transpose()?;
    let payload = parse_dash_u64(fields[5], line, "payload")?;
    let id = BlockId::from_hex(fields[6]).ok_or(ChainFileError::BadField { line, field: "id" })?;
    Block::with_claimed_id(kind, parent, mat_index, nonce, creator, payload, id)
        .ok_or(ChainFileError::Inconsistent { line })
}

/// Parses the text into a chain, checking genesis placement, parent links
/// (or admissible compaction gaps) and index monotonicity. Proof-of-work and
/// id integrity are checked separately via `Chain::validate`.
pub fn parse(text: &str) -> Result<Chain, ChainFileError> {
    let mut blocks = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        blocks.push(parse_line(trimmed, i + 1)?);
    }
    if blocks.is_empty() {
        return Err(ChainFileError::Empty);
    }
    Ok(Chain::from_blocks(blocks)?)
}
